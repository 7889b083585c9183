//! Damped (Levenberg–Marquardt) least squares with optional projection.
//!
//! Both the spectrum fit and the field inversion are small dense problems
//! (at most a few hundred residuals, ≤ 18 parameters), so the normal
//! equations are formed explicitly and solved by Cholesky. Damping is
//! Marquardt's diagonal scaling, `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr`, which keeps
//! the iteration invariant under rescaling of individual parameters.
//! Bounds are handled by projecting every trial point back into the
//! feasible set before it is evaluated.

use nalgebra::{DMatrix, DVector};

pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);

    /// Map a trial point onto the feasible set.
    fn project(&self, _x: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub max_iterations: usize,
    /// Converged when every `|Δxᵢ| ≤ x_tol·(|xᵢ| + x_tol)`.
    pub x_tol: f64,
    /// Converged when `(χ²_old − χ²_new) ≤ chi2_tol·χ²_old`.
    pub chi2_tol: f64,
    pub initial_lambda: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            x_tol: 1e-8,
            chi2_tol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    StepTolerance,
    Chi2Tolerance,
    /// No damped step lowers χ² any more; the point is a numerical minimum.
    NoFurtherDecrease,
    MaxIterations,
    Singular,
    NonFinite,
}

impl Termination {
    pub fn is_converged(&self) -> bool {
        matches!(
            self,
            Termination::StepTolerance | Termination::Chi2Tolerance | Termination::NoFurtherDecrease
        )
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub x: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl Report {
    pub fn converged(&self) -> bool {
        self.termination.is_converged()
    }
}

const LAMBDA_MAX: f64 = 1e16;
const LAMBDA_MIN: f64 = 1e-15;

pub fn minimize<P: Problem>(problem: &P, x0: &DVector<f64>, settings: &Settings) -> Report {
    let (n, m) = (problem.n_params(), problem.n_residuals());
    let mut x = x0.clone();
    problem.project(&mut x);

    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    problem.residuals(&x, &mut r);
    let mut chi2 = r.norm_squared();

    let finish = |x, residuals, jacobian, chi2, iterations, termination| Report {
        x,
        residuals,
        jacobian,
        chi2,
        iterations,
        termination,
    };

    if !chi2.is_finite() {
        problem.jacobian(&x, &mut jac);
        return finish(x, r, jac, chi2, 0, Termination::NonFinite);
    }

    let mut lambda = settings.initial_lambda;
    let mut trial = DVector::zeros(n);
    let mut r_trial = DVector::zeros(m);

    for iter in 1..=settings.max_iterations {
        problem.jacobian(&x, &mut jac);
        if chi2 == 0.0 {
            return finish(x, r, jac, chi2, iter - 1, Termination::Chi2Tolerance);
        }
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&r);
        if jtj.iter().any(|v| !v.is_finite()) || grad.iter().any(|v| !v.is_finite()) {
            return finish(x, r, jac, chi2, iter, Termination::NonFinite);
        }
        let scale: DVector<f64> = jtj.diagonal().map(|d| if d > 0.0 { d } else { 1.0 });

        let accepted = loop {
            if lambda > LAMBDA_MAX {
                break None;
            }
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * scale[i];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            trial.copy_from(&x);
            trial += &step;
            problem.project(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let chi2_trial = r_trial.norm_squared();
            if chi2_trial.is_finite() && chi2_trial < chi2 {
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                break Some(chi2_trial);
            }
            lambda *= 10.0;
        };

        let Some(chi2_new) = accepted else {
            let termination = if normal_inverse(&jac).is_none() {
                Termination::Singular
            } else {
                Termination::NoFurtherDecrease
            };
            return finish(x, r, jac, chi2, iter, termination);
        };

        let small_step = x
            .iter()
            .zip(trial.iter())
            .all(|(&old, &new)| (new - old).abs() <= settings.x_tol * (old.abs() + settings.x_tol));
        let small_chi2 = chi2 - chi2_new <= settings.chi2_tol * chi2;

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut r, &mut r_trial);
        chi2 = chi2_new;

        if small_step || small_chi2 {
            problem.jacobian(&x, &mut jac);
            let t = if small_step {
                Termination::StepTolerance
            } else {
                Termination::Chi2Tolerance
            };
            return finish(x, r, jac, chi2, iter, t);
        }
    }
    problem.jacobian(&x, &mut jac);
    finish(x, r, jac, chi2, settings.max_iterations, Termination::MaxIterations)
}

/// `(JᵀJ)⁻¹`, or `None` when the normal matrix is singular.
pub fn normal_inverse(jac: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let jtj = jac.tr_mul(jac);
    // equilibrate before inverting; centers (~10³ MHz) and amplitudes can
    // differ by many orders of magnitude in column norm
    let d: DVector<f64> = jtj.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    if d.iter().any(|&v| v == 0.0) {
        return None;
    }
    let scaled = DMatrix::from_fn(jtj.nrows(), jtj.ncols(), |i, j| jtj[(i, j)] * d[i] * d[j]);
    let inv = scaled.cholesky()?.inverse();
    let out = DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| inv[(i, j)] * d[i] * d[j]);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

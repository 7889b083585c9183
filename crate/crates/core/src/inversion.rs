//! Resonance frequencies to vector field.
//!
//! Four fitted line centers are matched to four `(axis, transition)` pairs
//! and the field `(B_M, θ, φ)` is found by bounded least squares with
//! `B_M` confined to `nominal·(1 ± band)`. Several starts are run around the
//! seed direction; solutions are clustered and the result is flagged unique
//! when only one cluster is statistically compatible with the data.
//!
//! The field is parameterized directly in `(B_M, θ, φ)`; for starts closer
//! than 10° to the poles (|θ| > 80°) the solver switches to Cartesian
//! components, where the longitude is not degenerate.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crystal::{cartesian_to_spherical, spherical_to_cartesian, wrap_degrees, FrameRotation, SphericalField, Vec3};
use crate::error::{Error, Result};
use crate::lsq::{self, Problem, Termination};
use crate::spinmodel::{transition_frequencies, transition_gradients, SpinModelParams, Transition};

/// Drive strengths at or below this are treated as forbidden lines.
pub const STRENGTH_FLOOR: f64 = 1e-12;
/// Residual RMS above this multiple of the measurement σ flags a model mismatch.
pub const MISMATCH_FACTOR: f64 = 5.0;
/// Clusters whose χ² exceeds the best by more than this are not competitors.
pub const COMPETING_DELTA_CHI2: f64 = 9.0;
/// Merge radius of the clustering, in units of the best solution's 1σ.
pub const MERGE_SIGMAS: f64 = 3.0;

const POLE_SWITCH_DEG: f64 = 80.0;

/// Which `(axis, transition)` produced each fitted center, in center order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionAssignment {
    entries: Vec<(usize, Transition)>,
}

impl TransitionAssignment {
    /// `axis` labels are 1-based.
    pub fn new(entries: Vec<(usize, Transition)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty transition assignment".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if !(1..=4).contains(&e.0) {
                return Err(Error::InvalidParameter(format!("NV axis {} outside 1..=4", e.0)));
            }
            if entries[..i].contains(e) {
                return Err(Error::InvalidParameter(format!("duplicate assignment {}:{}", e.0, e.1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, Transition)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses `1:dq,4:dq,3:minus,2:minus`.
impl std::str::FromStr for TransitionAssignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|item| {
                let (axis, kind) = item
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidParameter(format!("assignment entry '{item}' is not axis:kind")))?;
                let axis: usize = axis
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad axis in '{item}'")))?;
                let kind = Transition::parse(kind)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad transition in '{item}'")))?;
                Ok((axis, kind))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl fmt::Display for TransitionAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (axis, kind)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{axis}:{kind}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Observable line positions `|E_a − E_b|` (MHz), in assignment order.
    pub freqs: Vec<f64>,
    /// Assignment indices whose drive strength is zero at this field.
    pub unobservable: Vec<usize>,
}

/// Forward model for a crystal-frame field.
pub fn predict_frequencies(p: &SpinModelParams, field: &SphericalField, assign: &TransitionAssignment) -> Prediction {
    predict_cartesian(p, &spherical_to_cartesian(field), assign)
}

fn predict_cartesian(p: &SpinModelParams, b: &Vec3, assign: &TransitionAssignment) -> Prediction {
    let table = transition_frequencies(p, b);
    let mut unobservable = Vec::new();
    let freqs = assign
        .entries
        .iter()
        .enumerate()
        .map(|(i, &(axis, kind))| {
            let row = &table.axes[axis - 1];
            if row.strength(kind) <= STRENGTH_FLOOR {
                unobservable.push(i);
            }
            row.frequency(kind).abs()
        })
        .collect();
    Prediction { freqs, unobservable }
}

/// Matches ascending `centers` to observable lines predicted at `seed`,
/// preserving order and minimizing the summed distance.
pub fn nearest_assignment(
    p: &SpinModelParams,
    seed: &SphericalField,
    rotation: &FrameRotation,
    centers: &[f64],
) -> Result<TransitionAssignment> {
    if centers.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("centers must be ascending".into()));
    }
    let b = rotation.lab_to_crystal(&spherical_to_cartesian(seed));
    let table = transition_frequencies(p, &b);
    let mut lines: Vec<(f64, usize, Transition)> = table
        .axes
        .iter()
        .enumerate()
        .flat_map(|(k, row)| {
            Transition::ALL
                .into_iter()
                .filter(|t| row.strength(*t) > STRENGTH_FLOOR)
                .map(move |t| (row.frequency(t).abs(), k + 1, t))
        })
        .collect();
    lines.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (n, m) = (centers.len(), lines.len());
    if n == 0 || n > m {
        return Err(Error::InvalidParameter(format!(
            "cannot assign {n} centers to {m} observable lines"
        )));
    }
    // cost[i][j]: best total for the first i centers using the first j lines
    let inf = f64::INFINITY;
    let mut cost = vec![vec![inf; m + 1]; n + 1];
    let mut take = vec![vec![false; m + 1]; n + 1];
    cost[0].iter_mut().for_each(|c| *c = 0.0);
    for i in 1..=n {
        for j in i..=m {
            let skip = cost[i][j - 1];
            let use_it = cost[i - 1][j - 1] + (centers[i - 1] - lines[j - 1].0).abs();
            if use_it <= skip {
                cost[i][j] = use_it;
                take[i][j] = true;
            } else {
                cost[i][j] = skip;
            }
        }
    }
    let mut entries = vec![(0, Transition::Minus); n];
    let (mut i, mut j) = (n, m);
    while i > 0 {
        if take[i][j] {
            entries[i - 1] = (lines[j - 1].1, lines[j - 1].2);
            i -= 1;
        }
        j -= 1;
    }
    TransitionAssignment::new(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    /// Expected field magnitude (mT).
    pub nominal_b: f64,
    /// Allowed relative deviation from `nominal_b`.
    pub magnitude_band: f64,
    pub theta0_deg: f64,
    pub phi0_deg: f64,
    /// Number of starts, the seed itself included.
    pub multistart: usize,
    /// Half-width of the angular window the extra starts are drawn from.
    pub seed_spread_deg: f64,
    /// σ (MHz) used when the measurement carries none.
    pub assumed_sigma: f64,
    pub rng_seed: u64,
    /// Relative parameter-step tolerance.
    pub x_tol: f64,
    pub max_iterations: usize,
    pub rotation: FrameRotation,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            nominal_b: 104.5,
            magnitude_band: 0.10,
            theta0_deg: 35.46,
            phi0_deg: -2.43,
            multistart: 8,
            seed_spread_deg: 10.0,
            assumed_sigma: 0.1,
            rng_seed: 0x5eed,
            x_tol: 1e-9,
            max_iterations: 200,
            rotation: FrameRotation::identity(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.nominal_b.is_finite() && self.nominal_b > 0.0) {
            return bad(format!("nominal_b = {} must be > 0", self.nominal_b));
        }
        if !(self.magnitude_band > 0.0 && self.magnitude_band < 1.0) {
            return bad(format!("magnitude_band = {} outside (0, 1)", self.magnitude_band));
        }
        if !(-90.0..=90.0).contains(&self.theta0_deg) || !self.phi0_deg.is_finite() {
            return bad("seed angles out of range".into());
        }
        if self.multistart == 0 {
            return bad("multistart must be >= 1".into());
        }
        if !(self.seed_spread_deg.is_finite() && self.seed_spread_deg >= 0.0) {
            return bad(format!("seed_spread_deg = {}", self.seed_spread_deg));
        }
        if !(self.assumed_sigma.is_finite() && self.assumed_sigma > 0.0) {
            return bad(format!("assumed_sigma = {}", self.assumed_sigma));
        }
        if !(self.x_tol > 0.0) || self.max_iterations == 0 {
            return bad("solver tolerances".into());
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        (
            self.nominal_b * (1.0 - self.magnitude_band),
            self.nominal_b * (1.0 + self.magnitude_band),
        )
    }

    pub fn seed(&self) -> SphericalField {
        SphericalField {
            b_m: self.nominal_b,
            theta_deg: self.theta0_deg,
            phi_deg: wrap_degrees(self.phi0_deg),
        }
    }
}

/// Measured line centers (MHz) with optional 1σ.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub freqs: Vec<f64>,
    pub sigmas: Option<Vec<f64>>,
}

impl Measurement {
    pub fn new(freqs: Vec<f64>, sigmas: Option<Vec<f64>>) -> Result<Self> {
        if freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("measured frequencies".into()));
        }
        if let Some(s) = &sigmas {
            if s.len() != freqs.len() {
                return Err(Error::InvalidParameter("one sigma per frequency required".into()));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidParameter("sigmas must be finite and > 0".into()));
            }
        }
        Ok(Self { freqs, sigmas })
    }

    pub fn exact(freqs: Vec<f64>) -> Result<Self> {
        Self::new(freqs, None)
    }

    fn sigmas_or(&self, fallback: f64) -> Vec<f64> {
        self.sigmas.clone().unwrap_or_else(|| vec![fallback; self.freqs.len()])
    }
}

/// One start of the multistart solve.
#[derive(Debug, Clone, PartialEq)]
pub struct StartDiagnostics {
    pub start: SphericalField,
    pub end: SphericalField,
    pub chi2_start: f64,
    pub chi2: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub cartesian: bool,
}

impl StartDiagnostics {
    pub fn converged(&self) -> bool {
        self.termination.is_converged()
    }
}

/// A distinct local minimum found by the multistart solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub field: SphericalField,
    /// 1σ of `(B_M [mT], θ [deg], φ [deg])`.
    pub sigma: [f64; 3],
    pub chi2: f64,
    pub residual_mhz: f64,
    /// Number of starts that landed in this cluster.
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub field: SphericalField,
    /// 1σ of `(B_M [mT], θ [deg], φ [deg])`.
    pub sigma: [f64; 3],
    /// RMS of predicted minus measured frequencies (MHz).
    pub residual_mhz: f64,
    pub chi2: f64,
    pub unique: bool,
    /// Residual RMS exceeds `MISMATCH_FACTOR` times the measurement σ.
    pub mismatch: bool,
    /// `B_M` sits on the edge of the allowed band.
    pub at_bound: bool,
    /// Assignment indices with zero drive strength at the solution.
    pub unobservable: Vec<usize>,
    pub minima: Vec<Minimum>,
    pub starts: Vec<StartDiagnostics>,
}

#[derive(Clone, Copy)]
enum Param {
    Spherical,
    Cartesian,
}

struct FieldProblem<'a> {
    params: &'a SpinModelParams,
    assign: &'a TransitionAssignment,
    measured: &'a [f64],
    weights: Vec<f64>,
    rotation: &'a FrameRotation,
    bounds: (f64, f64),
    param: Param,
}

impl FieldProblem<'_> {
    fn lab_field(&self, x: &DVector<f64>) -> Vec3 {
        match self.param {
            Param::Spherical => {
                let (st, ct) = x[1].sin_cos();
                let (sp, cp) = x[2].sin_cos();
                Vec3::new(x[0] * st, x[0] * ct * cp, x[0] * ct * sp)
            }
            Param::Cartesian => Vec3::new(x[0], x[1], x[2]),
        }
    }

    /// ∂(lab field)/∂(parameters), columns per parameter.
    fn field_jacobian(&self, x: &DVector<f64>) -> [Vec3; 3] {
        match self.param {
            Param::Spherical => {
                let (b, (st, ct), (sp, cp)) = (x[0], x[1].sin_cos(), x[2].sin_cos());
                [
                    Vec3::new(st, ct * cp, ct * sp),
                    Vec3::new(b * ct, -b * st * cp, -b * st * sp),
                    Vec3::new(0.0, -b * ct * sp, b * ct * cp),
                ]
            }
            Param::Cartesian => [Vec3::x(), Vec3::y(), Vec3::z()],
        }
    }
}

impl Problem for FieldProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.measured.len()
    }

    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let b = self.rotation.lab_to_crystal(&self.lab_field(x));
        let pred = predict_cartesian(self.params, &b, self.assign);
        for (i, (f, m)) in pred.freqs.iter().zip(self.measured).enumerate() {
            out[i] = (f - m) * self.weights[i];
        }
    }

    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        let b = self.rotation.lab_to_crystal(&self.lab_field(x));
        let table = transition_frequencies(self.params, &b);
        let grads = transition_gradients(self.params, &b);
        let dfield = self.field_jacobian(x);
        for (i, &(axis, kind)) in self.assign.entries.iter().enumerate() {
            let signed = table.axes[axis - 1].frequency(kind);
            let sign = if signed < 0.0 { -1.0 } else { 1.0 };
            let g_lab = self.rotation.matrix().transpose() * grads[axis - 1][kind as usize];
            for (j, d) in dfield.iter().enumerate() {
                out[(i, j)] = sign * g_lab.dot(d) * self.weights[i];
            }
        }
    }

    fn project(&self, x: &mut DVector<f64>) {
        let (lo, hi) = self.bounds;
        match self.param {
            Param::Spherical => {
                x[0] = x[0].clamp(lo, hi);
                let half_pi = std::f64::consts::FRAC_PI_2;
                if x[1] > half_pi || x[1] < -half_pi {
                    // walked over a pole: reflect latitude, rotate longitude
                    x[1] = x[1].signum() * std::f64::consts::PI - x[1];
                    x[2] += std::f64::consts::PI;
                }
                x[2] = wrap_degrees(x[2].to_degrees()).to_radians();
            }
            Param::Cartesian => {
                let v = Vec3::new(x[0], x[1], x[2]);
                let n = v.norm();
                if n > 0.0 && !(lo..=hi).contains(&n) {
                    let s = n.clamp(lo, hi) / n;
                    x[0] *= s;
                    x[1] *= s;
                    x[2] *= s;
                } else if n == 0.0 {
                    x[0] = lo;
                }
            }
        }
    }
}

fn starting_points(cfg: &InversionConfig) -> Vec<SphericalField> {
    let (lo, hi) = cfg.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut starts = vec![cfg.seed()];
    let spread = cfg.seed_spread_deg;
    while starts.len() < cfg.multistart {
        let b = rng.random_range(lo..=hi);
        let theta = if spread > 0.0 {
            cfg.theta0_deg + rng.random_range(-spread..=spread)
        } else {
            cfg.theta0_deg
        };
        let phi = if spread > 0.0 {
            cfg.phi0_deg + rng.random_range(-spread..=spread)
        } else {
            cfg.phi0_deg
        };
        // fold latitudes beyond the poles back onto the sphere
        let (theta, phi) = if theta > 90.0 {
            (180.0 - theta, phi + 180.0)
        } else if theta < -90.0 {
            (-180.0 - theta, phi + 180.0)
        } else {
            (theta, phi)
        };
        starts.push(SphericalField {
            b_m: b,
            theta_deg: theta,
            phi_deg: wrap_degrees(phi),
        });
    }
    starts
}

struct Solved {
    diag: StartDiagnostics,
    sigma: [f64; 3],
    residual_mhz: f64,
}

fn solve_from(
    params: &SpinModelParams,
    assign: &TransitionAssignment,
    measured: &Measurement,
    cfg: &InversionConfig,
    start: &SphericalField,
) -> Solved {
    let sigmas = measured.sigmas_or(cfg.assumed_sigma);
    let cartesian = start.theta_deg.abs() > POLE_SWITCH_DEG;
    let mut problem = FieldProblem {
        params,
        assign,
        measured: &measured.freqs,
        weights: sigmas.iter().map(|s| 1.0 / s).collect(),
        rotation: &cfg.rotation,
        bounds: cfg.bounds(),
        param: if cartesian { Param::Cartesian } else { Param::Spherical },
    };
    let x0 = if cartesian {
        let v = spherical_to_cartesian(start);
        DVector::from_vec(vec![v.x, v.y, v.z])
    } else {
        DVector::from_vec(vec![start.b_m, start.theta_deg.to_radians(), start.phi_deg.to_radians()])
    };
    let mut r0 = DVector::zeros(measured.freqs.len());
    let mut x0p = x0.clone();
    problem.project(&mut x0p);
    problem.residuals(&x0p, &mut r0);

    let settings = lsq::Settings {
        max_iterations: cfg.max_iterations,
        x_tol: cfg.x_tol,
        chi2_tol: 1e-15,
        initial_lambda: 1e-3,
    };
    let report = lsq::minimize(&problem, &x0, &settings);
    let lab = problem.lab_field(&report.x);
    let end = cartesian_to_spherical(&lab);

    // covariance always in (B, θ, φ)
    problem.param = Param::Spherical;
    let xs = DVector::from_vec(vec![end.b_m, end.theta_deg.to_radians(), end.phi_deg.to_radians()]);
    let mut jac = DMatrix::zeros(measured.freqs.len(), 3);
    problem.jacobian(&xs, &mut jac);
    let sigma = match lsq::normal_inverse(&jac) {
        Some(cov) => [
            cov[(0, 0)].max(0.0).sqrt(),
            cov[(1, 1)].max(0.0).sqrt().to_degrees(),
            cov[(2, 2)].max(0.0).sqrt().to_degrees(),
        ],
        None => [f64::INFINITY; 3],
    };
    let residual_mhz = {
        let pred = predict_cartesian(params, &cfg.rotation.lab_to_crystal(&lab), assign);
        let ss: f64 = pred.freqs.iter().zip(&measured.freqs).map(|(p, m)| (p - m).powi(2)).sum();
        (ss / measured.freqs.len() as f64).sqrt()
    };
    Solved {
        diag: StartDiagnostics {
            start: *start,
            end,
            chi2_start: r0.norm_squared(),
            chi2: report.chi2,
            iterations: report.iterations,
            termination: report.termination,
            cartesian,
        },
        sigma,
        residual_mhz,
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    wrap_degrees(a - b).abs()
}

fn same_cluster(a: &SphericalField, b: &SphericalField, radius: &[f64; 3]) -> bool {
    let near_pole = a.theta_deg.abs() > POLE_SWITCH_DEG || b.theta_deg.abs() > POLE_SWITCH_DEG;
    (a.b_m - b.b_m).abs() <= radius[0]
        && (a.theta_deg - b.theta_deg).abs() <= radius[1]
        && (near_pole && a.theta_deg.signum() == b.theta_deg.signum() || angle_gap(a.phi_deg, b.phi_deg) <= radius[2])
}

fn cluster(solved: &[Solved]) -> Vec<Minimum> {
    let mut order: Vec<&Solved> = solved.iter().filter(|s| s.diag.converged()).collect();
    order.sort_by(|a, b| a.diag.chi2.total_cmp(&b.diag.chi2));
    let mut minima: Vec<Minimum> = Vec::new();
    for s in order {
        // radius from the cluster representative; floor keeps noiseless cases sane
        let hit = minima.iter_mut().find(|m| {
            let radius = [
                (MERGE_SIGMAS * m.sigma[0]).max(1e-6),
                (MERGE_SIGMAS * m.sigma[1]).max(1e-5),
                (MERGE_SIGMAS * m.sigma[2]).max(1e-5),
            ];
            same_cluster(&m.field, &s.diag.end, &radius)
        });
        match hit {
            Some(m) => m.members += 1,
            None => minima.push(Minimum {
                field: s.diag.end,
                sigma: s.sigma,
                chi2: s.diag.chi2,
                residual_mhz: s.residual_mhz,
                members: 1,
            }),
        }
    }
    minima
}

fn run_multistart(
    params: &SpinModelParams,
    measured: &Measurement,
    cfg: &InversionConfig,
    assign: &TransitionAssignment,
) -> Result<Vec<Solved>> {
    params.validate()?;
    cfg.validate()?;
    if measured.freqs.len() != assign.len() {
        return Err(Error::InvalidParameter(format!(
            "{} measured frequencies for {} assigned transitions",
            measured.freqs.len(),
            assign.len()
        )));
    }
    if measured.freqs.len() < 3 {
        return Err(Error::InvalidParameter("at least 3 frequencies are needed for 3 unknowns".into()));
    }
    Ok(starting_points(cfg)
        .iter()
        .map(|s| solve_from(params, assign, measured, cfg, s))
        .collect())
}

/// Multistart bounded inversion of assigned line centers to a field.
pub fn invert(
    params: &SpinModelParams,
    measured: &Measurement,
    cfg: &InversionConfig,
    assign: &TransitionAssignment,
) -> Result<InversionResult> {
    let solved = run_multistart(params, measured, cfg, assign)?;
    let Some(best) = solved
        .iter()
        .filter(|s| s.diag.converged())
        .min_by(|a, b| a.diag.chi2.total_cmp(&b.diag.chi2))
    else {
        let detail = solved
            .iter()
            .map(|s| {
                format!(
                    "start ({:.3} mT, {:.2}°, {:.2}°): {:?} after {} iterations, chi2 {:.3e}",
                    s.diag.start.b_m, s.diag.start.theta_deg, s.diag.start.phi_deg, s.diag.termination, s.diag.iterations, s.diag.chi2
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::InversionFailed(detail));
    };

    let minima = cluster(&solved);
    let competing = minima
        .iter()
        .filter(|m| m.chi2 - best.diag.chi2 <= COMPETING_DELTA_CHI2)
        .count();

    let sigmas = measured.sigmas_or(cfg.assumed_sigma);
    let sigma_rms = (sigmas.iter().map(|s| s * s).sum::<f64>() / sigmas.len() as f64).sqrt();
    let (lo, hi) = cfg.bounds();
    let field = best.diag.end;
    let b_crystal = cfg.rotation.lab_to_crystal(&spherical_to_cartesian(&field));
    let unobservable = predict_cartesian(params, &b_crystal, assign).unobservable;

    Ok(InversionResult {
        field,
        sigma: best.sigma,
        residual_mhz: best.residual_mhz,
        chi2: best.diag.chi2,
        unique: competing == 1,
        mismatch: best.residual_mhz > MISMATCH_FACTOR * sigma_rms,
        at_bound: (field.b_m - lo).abs() <= 1e-9 * hi || (field.b_m - hi).abs() <= 1e-9 * hi,
        unobservable,
        minima,
        starts: solved.into_iter().map(|s| s.diag).collect(),
    })
}

/// Distinct local minima from a multistart solve, best first.
pub fn uniqueness_scan(
    params: &SpinModelParams,
    measured: &Measurement,
    cfg: &InversionConfig,
    assign: &TransitionAssignment,
) -> Result<Vec<Minimum>> {
    if cfg.multistart < 8 {
        return Err(Error::InvalidParameter(format!(
            "uniqueness scan needs multistart >= 8, got {}",
            cfg.multistart
        )));
    }
    Ok(cluster(&run_multistart(params, measured, cfg, assign)?))
}

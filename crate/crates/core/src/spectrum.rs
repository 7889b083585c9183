//! Demodulated ODMR spectra as sums of derivative Lorentzians.
//!
//! Lock-in detection with frequency modulation turns each Lorentzian dip into
//! a dispersive feature. One component is
//!
//! ```text
//! y(f) = A · (−2u / (1 + u²)²),   u = (f − f₀) / (Γ/2)
//! ```
//!
//! with Γ the FWHM of the underlying Lorentzian. The feature is odd about
//! `f₀`, crosses zero there and has its extrema at `u = ±1/√3`, where
//! `|y| = A·(3√3/8)`. A positive `A` puts the positive lobe on the low
//! frequency side. All components of a [`SpectrumModel`] share one Γ.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lsq::{self, Problem, Termination};

pub const DEFAULT_COMPONENTS: usize = 4;
pub const MAX_COMPONENTS: usize = 8;

/// `|y|` at the extrema divided by the amplitude: `3√3/8`.
pub const PEAK_FACTOR: f64 = 0.649_519_052_838_329;

/// Detection threshold of [`initial_guess`] in units of the robust noise estimate.
pub const DETECTION_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lineshape {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
}

#[inline]
fn shape(u: f64) -> f64 {
    let d = 1.0 + u * u;
    -2.0 * u / (d * d)
}

#[inline]
fn shape_deriv(u: f64) -> f64 {
    let d = 1.0 + u * u;
    -2.0 * (1.0 - 3.0 * u * u) / (d * d * d)
}

pub fn dlorentzian(f: f64, line: &Lineshape) -> f64 {
    line.amplitude * shape((f - line.center) / (0.5 * line.fwhm))
}

/// Components sharing one linewidth, plus a constant baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    pub centers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub fwhm: f64,
    pub baseline: f64,
}

impl SpectrumModel {
    pub fn new(centers: Vec<f64>, amplitudes: Vec<f64>, fwhm: f64, baseline: f64) -> Result<Self> {
        let m = Self {
            centers,
            amplitudes,
            fwhm,
            baseline,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 || n > MAX_COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "component count {n} outside 1..={MAX_COMPONENTS}"
            )));
        }
        if self.amplitudes.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for {n} centers",
                self.amplitudes.len()
            )));
        }
        if !(self.fwhm.is_finite() && self.fwhm > 0.0) {
            return Err(Error::InvalidParameter(format!("fwhm = {} must be > 0", self.fwhm)));
        }
        let finite = self.centers.iter().chain(&self.amplitudes).all(|v| v.is_finite());
        if !finite || !self.baseline.is_finite() {
            return Err(Error::NonFinite("spectrum model".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.centers.len()
    }

    pub fn components(&self) -> impl Iterator<Item = Lineshape> + '_ {
        self.centers.iter().zip(&self.amplitudes).map(|(&center, &amplitude)| Lineshape {
            center,
            fwhm: self.fwhm,
            amplitude,
        })
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.baseline + self.components().map(|l| dlorentzian(f, &l)).sum::<f64>()
    }

    /// Parameter vector `[centers.., amplitudes.., fwhm, baseline]`.
    pub fn to_params(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.centers.iter().chain(&self.amplitudes).copied().collect();
        v.push(self.fwhm);
        v.push(self.baseline);
        DVector::from_vec(v)
    }

    pub fn from_params(n: usize, x: &DVector<f64>) -> Self {
        Self {
            centers: x.rows(0, n).iter().copied().collect(),
            amplitudes: x.rows(n, n).iter().copied().collect(),
            fwhm: x[2 * n],
            baseline: x[2 * n + 1],
        }
    }

    /// Model Jacobian with columns ordered as in [`SpectrumModel::to_params`].
    pub fn jacobian(&self, freqs: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(freqs.len(), 2 * self.n_components() + 2);
        fill_jacobian(self.n_components(), &self.to_params(), freqs, &mut jac);
        jac
    }
}

fn fill_jacobian(n: usize, x: &DVector<f64>, freqs: &[f64], jac: &mut DMatrix<f64>) {
    let fwhm = x[2 * n];
    let half = 0.5 * fwhm;
    for (i, &f) in freqs.iter().enumerate() {
        let mut d_fwhm = 0.0;
        for k in 0..n {
            let (c, a) = (x[k], x[n + k]);
            let u = (f - c) / half;
            let g1 = shape_deriv(u);
            jac[(i, k)] = -a * g1 / half;
            jac[(i, n + k)] = shape(u);
            d_fwhm += -a * g1 * u / fwhm;
        }
        jac[(i, 2 * n)] = d_fwhm;
        jac[(i, 2 * n + 1)] = 1.0;
    }
}

/// One frequency sweep at one scan position.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    freqs: Vec<f64>,
    values: Vec<f64>,
    /// `(y_mm, z_mm)` when the trace belongs to a grid scan.
    pub position: Option<(f64, f64)>,
}

impl SweepTrace {
    /// Frequencies must be finite and strictly ascending.
    pub fn new(freqs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} frequencies but {} values",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sweep trace".into()));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("frequencies must be strictly ascending".into()));
        }
        Ok(Self {
            freqs,
            values,
            position: None,
        })
    }

    /// Sorts `(freq, value)` pairs first; duplicate frequencies are rejected.
    pub fn from_unsorted(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (freqs, values) = points.into_iter().unzip();
        Self::new(freqs, values)
    }

    pub fn with_position(mut self, y_mm: f64, z_mm: f64) -> Self {
        self.position = Some((y_mm, z_mm));
        self
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Fewer than 8 points per free parameter makes the fit poorly determined.
    pub fn is_undersampled(&self, n_components: usize) -> bool {
        self.len() < 8 * (2 * n_components + 2)
    }
}

/// Evaluates `model` on `freqs` and adds seeded Gaussian noise.
pub fn synthesize(model: &SpectrumModel, freqs: &[f64], noise_sigma: f64, seed: u64) -> Result<SweepTrace> {
    model.validate()?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma}")));
    }
    let mut values: Vec<f64> = freqs.iter().map(|&f| model.eval(f)).collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is finite and positive");
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    SweepTrace::new(freqs.to_vec(), values)
}

/// Frequencies spaced `step` apart across `center ± half_width` for each center,
/// merged and deduplicated. Mimics scans that only sample near expected lines.
pub fn windowed_grid(centers: &[f64], half_width: f64, step: f64) -> Vec<f64> {
    let n = (2.0 * half_width / step).round() as i64;
    let mut f: Vec<f64> = centers
        .iter()
        .flat_map(|&c| (0..=n).map(move |i| c - half_width + i as f64 * step))
        .collect();
    f.sort_by(f64::total_cmp);
    f.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * step);
    f
}

fn median(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Robust noise σ from the median absolute second difference.
pub fn robust_noise(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let mut d2: Vec<f64> = values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect();
    let med = median(&mut d2.clone());
    let mut dev: Vec<f64> = d2.iter_mut().map(|d| (*d - med).abs()).collect();
    // second differences of white noise have variance 6σ²
    1.4826 * median(&mut dev) / 6f64.sqrt()
}

#[derive(Debug, Clone, Copy)]
struct Run {
    sign: f64,
    start: usize,
    peak_idx: usize,
    peak: f64,
}

#[derive(Debug, Clone, Copy)]
struct Feature {
    center: f64,
    amplitude: f64,
    spacing: f64,
    score: f64,
}

/// Finds dispersive features: a zero crossing flanked by opposite-sign lobes
/// that both clear `DETECTION_SIGMAS` times the robust noise level.
pub fn initial_guess(trace: &SweepTrace, n_components: usize) -> Result<SpectrumModel> {
    if n_components == 0 || n_components > MAX_COMPONENTS {
        return Err(Error::InvalidParameter(format!(
            "component count {n_components} outside 1..={MAX_COMPONENTS}"
        )));
    }
    if trace.len() < 3 {
        return Err(Error::FeatureCount {
            found: 0,
            expected: n_components,
        });
    }
    let f = trace.freqs();
    let baseline = median(&mut trace.values().to_vec());
    let v: Vec<f64> = trace.values().iter().map(|x| x - baseline).collect();
    let max_abs = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let threshold = (DETECTION_SIGMAS * robust_noise(trace.values())).max(0.02 * max_abs);

    // sampling gaps (scans that skip between resonance windows) end a lobe
    let mut steps: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
    let max_step = 5.0 * median(&mut steps);
    let gap_before = |i: usize| i > 0 && f[i] - f[i - 1] > max_step;

    let mut runs: Vec<Run> = Vec::new();
    let mut current: Option<Run> = None;
    for (i, &x) in v.iter().enumerate() {
        let significant = x.abs() > threshold && threshold > 0.0;
        let sign = x.signum();
        if gap_before(i) {
            runs.extend(current.take());
        }
        match (&mut current, significant) {
            (Some(run), true) if run.sign == sign => {
                if x.abs() > run.peak.abs() {
                    run.peak_idx = i;
                    run.peak = x;
                }
            }
            (_, true) => {
                if let Some(run) = current.take() {
                    runs.push(run);
                }
                current = Some(Run {
                    sign,
                    start: i,
                    peak_idx: i,
                    peak: x,
                });
            }
            (_, false) => {
                if let Some(run) = current.take() {
                    runs.push(run);
                }
            }
        }
    }
    runs.extend(current);

    // noise around the threshold fragments a lobe's tails into several
    // same-sign runs; fold them into one unless a sampling gap intervenes
    let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(prev) if prev.sign == run.sign && !(prev.peak_idx + 1..=run.start).any(gap_before) => {
                if run.peak.abs() > prev.peak.abs() {
                    prev.peak_idx = run.peak_idx;
                    prev.peak = run.peak;
                }
            }
            _ => merged.push(run),
        }
    }
    let runs = merged;

    let candidates: Vec<(usize, Feature)> = runs
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].sign != w[1].sign)
        .filter_map(|(i, w)| {
            let (lo, hi) = (w[0], w[1]);
            let (a, b) = (lo.peak.abs(), hi.peak.abs());
            if a.max(b) > 4.0 * a.min(b) || (lo.peak_idx + 1..=hi.peak_idx).any(gap_before) {
                return None;
            }
            let center = zero_crossing(f, &v, lo.peak_idx, hi.peak_idx)?;
            let height = 0.5 * (a + b);
            Some((
                i,
                Feature {
                    center,
                    amplitude: lo.sign * height / PEAK_FACTOR,
                    spacing: f[hi.peak_idx] - f[lo.peak_idx],
                    score: a.min(b),
                },
            ))
        })
        .collect();

    // pairs of adjacent runs are disjoint iff no run is shared; pick the set
    // with the most features, then the highest total score. A greedy pick
    // can pair the trailing lobe of one line with the leading lobe of the next.
    let mut pair: Vec<Option<Feature>> = vec![None; runs.len().saturating_sub(1)];
    for (i, feat) in candidates {
        pair[i] = Some(feat);
    }
    // best[k]: optimum over the first k runs as (count, score, chosen pairs)
    let mut best: Vec<(usize, f64, Vec<usize>)> = vec![(0, 0.0, Vec::new()); runs.len() + 1];
    for k in 2..=runs.len() {
        let mut b = best[k - 1].clone();
        if let Some(feat) = &pair[k - 2] {
            let prev = &best[k - 2];
            let (c, sc) = (prev.0 + 1, prev.1 + feat.score);
            if c > b.0 || (c == b.0 && sc > b.1) {
                let mut chosen = prev.2.clone();
                chosen.push(k - 2);
                b = (c, sc, chosen);
            }
        }
        best[k] = b;
    }
    let mut picked: Vec<Feature> = best
        .last()
        .map(|b| b.2.iter().filter_map(|&i| pair[i]).collect())
        .unwrap_or_default();
    picked.sort_by(|a, b| b.score.total_cmp(&a.score));
    if picked.len() < n_components {
        return Err(Error::FeatureCount {
            found: picked.len(),
            expected: n_components,
        });
    }
    picked.truncate(n_components);
    picked.sort_by(|a, b| a.center.total_cmp(&b.center));

    let mut widths: Vec<f64> = picked.iter().map(|p| 3f64.sqrt() * p.spacing).collect();
    let fwhm = median(&mut widths);
    SpectrumModel::new(
        picked.iter().map(|p| p.center).collect(),
        picked.iter().map(|p| p.amplitude).collect(),
        fwhm,
        baseline,
    )
}

/// Linear interpolation of the sign change between two extrema, taking the
/// crossing nearest their midpoint.
fn zero_crossing(f: &[f64], v: &[f64], lo: usize, hi: usize) -> Option<f64> {
    let mid = 0.5 * (f[lo] + f[hi]);
    (lo..hi)
        .filter(|&i| v[i] == 0.0 || v[i].signum() != v[i + 1].signum())
        .map(|i| {
            if v[i] == 0.0 {
                f[i]
            } else {
                f[i] + (f[i + 1] - f[i]) * v[i] / (v[i] - v[i + 1])
            }
        })
        .min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
}

/// 1σ uncertainties of a fitted [`SpectrumModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumUncertainty {
    pub centers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub fwhm: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub model: SpectrumModel,
    /// `None` when the covariance could not be formed.
    pub uncertainty: Option<SpectrumUncertainty>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

struct SpectrumProblem<'a> {
    n: usize,
    freqs: &'a [f64],
    values: &'a [f64],
}

impl Problem for SpectrumProblem<'_> {
    fn n_params(&self) -> usize {
        2 * self.n + 2
    }

    fn n_residuals(&self) -> usize {
        self.freqs.len()
    }

    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n;
        let half = 0.5 * x[2 * n];
        for (i, (&f, &y)) in self.freqs.iter().zip(self.values).enumerate() {
            let mut m = x[2 * n + 1];
            for k in 0..n {
                m += x[n + k] * shape((f - x[k]) / half);
            }
            out[i] = m - y;
        }
    }

    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        fill_jacobian(self.n, x, self.freqs, out);
    }

    fn project(&self, x: &mut DVector<f64>) {
        let w = &mut x[2 * self.n];
        if !(*w > 1e-9) {
            *w = 1e-9;
        }
    }
}

/// Least-squares refinement of all centers, amplitudes, the shared FWHM and
/// the baseline, starting from `guess`.
pub fn fit_spectrum(trace: &SweepTrace, guess: &SpectrumModel) -> Result<SpectrumFit> {
    fit_points(trace.freqs(), trace.values(), guess)
}

/// Same as [`fit_spectrum`] on raw points in any order.
pub fn fit_points(freqs: &[f64], values: &[f64], guess: &SpectrumModel) -> Result<SpectrumFit> {
    guess.validate()?;
    if freqs.len() != values.len() {
        return Err(Error::InvalidParameter("frequency/value length mismatch".into()));
    }
    if freqs.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sweep trace".into()));
    }
    let n = guess.n_components();
    let p = 2 * n + 2;
    if freqs.len() <= p {
        return Err(Error::InvalidParameter(format!(
            "{} points cannot determine {p} parameters",
            freqs.len()
        )));
    }
    let problem = SpectrumProblem { n, freqs, values };
    let report = lsq::minimize(&problem, &guess.to_params(), &lsq::Settings::default());
    let model = SpectrumModel::from_params(n, &report.x);
    let dof = (freqs.len() - p) as f64;
    let residual_rms = (report.chi2 / freqs.len() as f64).sqrt();

    let uncertainty = lsq::normal_inverse(&report.jacobian).map(|cov| {
        let s2 = report.chi2 / dof;
        let sd = |i: usize| (cov[(i, i)].max(0.0) * s2).sqrt();
        SpectrumUncertainty {
            centers: (0..n).map(sd).collect(),
            amplitudes: (n..2 * n).map(sd).collect(),
            fwhm: sd(2 * n),
            baseline: sd(2 * n + 1),
        }
    });
    let converged = report.converged() && uncertainty.is_some() && residual_rms.is_finite();
    Ok(SpectrumFit {
        model,
        uncertainty,
        residual_rms,
        converged,
        iterations: report.iterations,
        termination: report.termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_lines() -> SpectrumModel {
        SpectrumModel::new(
            vec![4043.6, 4252.3, 4609.5, 4648.1],
            vec![1.0, -0.8, 0.6, 1.2],
            11.48,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn dlorentzian_basics() {
        let l = Lineshape {
            center: 4000.0,
            fwhm: 10.0,
            amplitude: 2.0,
        };
        assert_eq!(dlorentzian(4000.0, &l), 0.0);
        for d in [0.1, 1.0, 3.7, 50.0] {
            assert!((dlorentzian(4000.0 + d, &l) + dlorentzian(4000.0 - d, &l)).abs() < 1e-15);
        }
        assert!(dlorentzian(3990.0, &l) > 0.0);
    }

    #[test]
    fn extremum_location_by_scan() {
        let l = Lineshape {
            center: 0.0,
            fwhm: 11.48,
            amplitude: 1.0,
        };
        // dense grid then golden-section refinement of |y|
        let (mut best, mut best_v) = (0.0, 0.0);
        for i in 1..200_000 {
            let f = i as f64 * 1e-4;
            let y = dlorentzian(f, &l).abs();
            if y > best_v {
                best_v = y;
                best = f;
            }
        }
        let (mut a, mut b) = (best - 1e-4, best + 1e-4);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dlorentzian(c, &l).abs() > dlorentzian(d, &l).abs() {
                b = d;
            } else {
                a = c;
            }
        }
        let ext = 0.5 * (a + b);
        assert!((ext - 5.74 / 3f64.sqrt()).abs() < 1e-6, "{ext}");
        assert!((dlorentzian(ext, &l).abs() - PEAK_FACTOR).abs() < 1e-12);
    }

    #[test]
    fn synth_constant_and_single() {
        let freqs: Vec<f64> = (0..50).map(|i| 3900.0 + i as f64).collect();
        let mut m = four_lines();
        m.amplitudes = vec![0.0; 4];
        let t = synthesize(&m, &freqs, 0.0, 1).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.05));

        let m = SpectrumModel::new(vec![3920.0], vec![1.5], 8.0, -0.3).unwrap();
        let t = synthesize(&m, &freqs, 0.0, 1).unwrap();
        for (&f, &v) in t.freqs().iter().zip(t.values()) {
            let line = Lineshape {
                center: 3920.0,
                fwhm: 8.0,
                amplitude: 1.5,
            };
            assert_eq!(v, dlorentzian(f, &line) + -0.3);
        }
    }

    #[test]
    fn synth_is_seeded() {
        let m = four_lines();
        let f = windowed_grid(&m.centers, 20.0, 1.0);
        let a = synthesize(&m, &f, 0.1, 7).unwrap();
        let b = synthesize(&m, &f, 0.1, 7).unwrap();
        let c = synthesize(&m, &f, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn windowed_grid_has_164_points() {
        let f = windowed_grid(&four_lines().centers, 20.0, 1.0);
        assert_eq!(f.len(), 164);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trace_validation() {
        assert!(SweepTrace::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(SweepTrace::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(SweepTrace::new(vec![1.0, 2.0], vec![0.0, f64::NAN]).is_err());
        let t = SweepTrace::from_unsorted(vec![(2.0, 1.0), (1.0, 0.0)]).unwrap();
        assert_eq!(t.freqs(), &[1.0, 2.0]);
        assert!(t.is_undersampled(4));
    }

    #[test]
    fn guess_on_noiseless_trace() {
        let m = four_lines();
        let t = synthesize(&m, &windowed_grid(&m.centers, 20.0, 1.0), 0.0, 0).unwrap();
        let g = initial_guess(&t, 4).unwrap();
        for (gc, tc) in g.centers.iter().zip(&m.centers) {
            assert!((gc - tc).abs() < m.fwhm / 4.0, "{gc} vs {tc}");
        }
        for (ga, ta) in g.amplitudes.iter().zip(&m.amplitudes) {
            assert_eq!(ga.signum(), ta.signum());
        }
        assert!((g.fwhm - m.fwhm).abs() < 0.3 * m.fwhm);
    }

    #[test]
    fn guess_reports_missing_features() {
        let m = SpectrumModel::new(vec![4000.0, 4100.0, 4200.0], vec![1.0, 1.0, 1.0], 11.48, 0.0).unwrap();
        let t = synthesize(&m, &windowed_grid(&m.centers, 20.0, 1.0), 0.0, 0).unwrap();
        match initial_guess(&t, 4) {
            Err(Error::FeatureCount { found: 3, expected: 4 }) => {}
            other => panic!("{other:?}"),
        }
        let msg = initial_guess(&t, 4).unwrap_err().to_string();
        assert!(msg.contains("found 3 of 4"));
    }

    #[test]
    fn guess_on_pure_noise() {
        let m = SpectrumModel::new(vec![4000.0], vec![0.0], 11.48, 0.0).unwrap();
        let f: Vec<f64> = (0..164).map(|i| 3900.0 + i as f64).collect();
        for seed in 0..50 {
            let t = synthesize(&m, &f, 1.0, seed).unwrap();
            assert!(initial_guess(&t, 1).is_err(), "seed {seed}");
        }
    }

    #[test]
    fn robust_noise_estimate() {
        let m = SpectrumModel::new(vec![4000.0], vec![0.0], 11.48, 0.0).unwrap();
        let f: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let t = synthesize(&m, &f, 0.3, 3).unwrap();
        let s = robust_noise(t.values());
        assert!((s - 0.3).abs() < 0.03, "{s}");
    }

    #[test]
    fn noiseless_fit_recovers_truth() {
        let m = four_lines();
        let t = synthesize(&m, &windowed_grid(&m.centers, 20.0, 1.0), 0.0, 0).unwrap();
        let mut guess = m.clone();
        for (i, c) in guess.centers.iter_mut().enumerate() {
            *c += if i % 2 == 0 { 1.0 } else { -1.0 } * m.fwhm / 4.0;
        }
        guess.fwhm *= 1.1;
        let fit = fit_spectrum(&t, &guess).unwrap();
        assert!(fit.converged, "{:?}", fit.termination);
        for (a, b) in fit.model.centers.iter().zip(&m.centers) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!((fit.model.fwhm - m.fwhm).abs() < 1e-6);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = four_lines();
        let freqs = windowed_grid(&m.centers, 20.0, 1.0);
        let jac = m.jacobian(&freqs);
        let x = m.to_params();
        let n = m.n_components();
        for j in 0..x.len() {
            let scale = if j < n { m.fwhm } else { x[j].abs().max(1.0) };
            let h = 1e-4 * scale;
            let mut up = x.clone();
            up[j] += h;
            let mut dn = x.clone();
            dn[j] -= h;
            let (mu, md) = (SpectrumModel::from_params(n, &up), SpectrumModel::from_params(n, &dn));
            let col_norm = jac.column(j).amax();
            for (i, &f) in freqs.iter().enumerate() {
                let fd = (mu.eval(f) - md.eval(f)) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() <= 1e-6 * col_norm, "param {j} point {i}: {fd} vs {}", jac[(i, j)]);
            }
        }
    }

    #[test]
    fn rejects_nan_and_bad_guess() {
        let m = four_lines();
        let f = windowed_grid(&m.centers, 20.0, 1.0);
        let mut v: Vec<f64> = f.iter().map(|&x| m.eval(x)).collect();
        v[3] = f64::NAN;
        assert!(matches!(fit_points(&f, &v, &m), Err(Error::NonFinite(_))));
        let mut bad = m.clone();
        bad.fwhm = 0.0;
        assert!(fit_points(&f, &f, &bad).is_err());
    }

    #[test]
    fn degenerate_components_are_not_converged() {
        // two identical components: amplitude columns are collinear
        let m = SpectrumModel::new(vec![4000.0, 4000.0], vec![1.0, 1.0], 10.0, 0.0).unwrap();
        let f = windowed_grid(&[4000.0], 30.0, 1.0);
        let t = synthesize(&m, &f, 0.0, 0).unwrap();
        let fit = fit_spectrum(&t, &m).unwrap();
        assert!(!fit.converged);
        assert!(fit.uncertainty.is_none());
    }
}

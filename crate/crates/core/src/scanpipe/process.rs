//! Per-pixel fit and inversion, and region statistics.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::crystal::{wrap_degrees, SphericalField};
use crate::error::{Error, Result};
use crate::inversion::{invert, nearest_assignment, InversionResult, Measurement, TransitionAssignment};
use crate::spectrum::{fit_spectrum, initial_guess, SpectrumFit};

use super::config::{PipelineConfig, Region};
use super::ingest::{grid_report, GridReport, ScanRecord};

/// Above this failed fraction the map carries a warning.
pub const FAILURE_WARNING_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailureReason {
    Undersampled,
    FeatureCount,
    FitNotConverged,
    NoUncertainty,
    Assignment,
    InversionFailed,
}

impl FailureReason {
    pub fn code(&self) -> &'static str {
        match self {
            FailureReason::Undersampled => "undersampled",
            FailureReason::FeatureCount => "feature_count",
            FailureReason::FitNotConverged => "fit_not_converged",
            FailureReason::NoUncertainty => "no_uncertainty",
            FailureReason::Assignment => "assignment",
            FailureReason::InversionFailed => "inversion_failed",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub reason: FailureReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pixel {
    pub y_mm: f64,
    pub z_mm: f64,
    /// Fitted centers, ascending (MHz). Empty when the fit failed.
    pub centers: Vec<f64>,
    pub center_sigmas: Vec<f64>,
    pub fit: Option<SpectrumFit>,
    pub assignment: Option<TransitionAssignment>,
    pub inversion: Option<InversionResult>,
    pub failure: Option<Failure>,
}

impl Pixel {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    /// Center of the `k`-th line in ascending order, NaN if unavailable.
    pub fn center(&self, k: usize) -> f64 {
        self.centers.get(k).copied().unwrap_or(f64::NAN)
    }

    /// The inversion-report row; NaN sentinels on failure.
    pub fn row(&self) -> FieldRow {
        match &self.inversion {
            Some(r) if self.ok() => FieldRow {
                y_mm: self.y_mm,
                z_mm: self.z_mm,
                b_mt: r.field.b_m,
                theta_deg: r.field.theta_deg,
                phi_deg: r.field.phi_deg,
                sigma_b: r.sigma[0],
                sigma_theta: r.sigma[1],
                sigma_phi: r.sigma[2],
                residual_mhz: r.residual_mhz,
                unique: r.unique,
            },
            _ => FieldRow {
                y_mm: self.y_mm,
                z_mm: self.z_mm,
                b_mt: f64::NAN,
                theta_deg: f64::NAN,
                phi_deg: f64::NAN,
                sigma_b: f64::NAN,
                sigma_theta: f64::NAN,
                sigma_phi: f64::NAN,
                residual_mhz: f64::NAN,
                unique: false,
            },
        }
    }
}

/// One line of the field-map CSV.
#[derive(Debug, Clone, Copy)]
pub struct FieldRow {
    pub y_mm: f64,
    pub z_mm: f64,
    pub b_mt: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub sigma_b: f64,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub residual_mhz: f64,
    pub unique: bool,
}

impl FieldRow {
    pub fn values(&self) -> [f64; 9] {
        [
            self.y_mm,
            self.z_mm,
            self.b_mt,
            self.theta_deg,
            self.phi_deg,
            self.sigma_b,
            self.sigma_theta,
            self.sigma_phi,
            self.residual_mhz,
        ]
    }
}

/// Bitwise equality, so NaN sentinels compare equal to themselves.
impl PartialEq for FieldRow {
    fn eq(&self, other: &Self) -> bool {
        self.unique == other.unique
            && self
                .values()
                .iter()
                .zip(other.values())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub n_pixels: usize,
    pub n_failed: usize,
    pub n_unique: usize,
    pub n_mismatch: usize,
    pub failures: BTreeMap<FailureReason, usize>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    /// Sorted by `(y, z)`.
    pub pixels: Vec<Pixel>,
    pub grid: GridReport,
    pub components: usize,
    pub summary: MapSummary,
}

impl FieldMap {
    pub fn rows(&self) -> Vec<FieldRow> {
        self.pixels.iter().map(Pixel::row).collect()
    }

    pub fn pixel_at(&self, y: f64, z: f64) -> Option<&Pixel> {
        self.pixels.iter().find(|p| p.y_mm == y && p.z_mm == z)
    }
}

fn fail(reason: FailureReason, detail: impl Into<String>) -> Failure {
    Failure {
        reason,
        detail: detail.into(),
    }
}

/// Guess, fit, assign and invert one record. Pure: no state is shared
/// between pixels.
pub fn process_record(rec: &ScanRecord, cfg: &PipelineConfig) -> Pixel {
    let mut px = Pixel {
        y_mm: rec.y_mm,
        z_mm: rec.z_mm,
        centers: Vec::new(),
        center_sigmas: Vec::new(),
        fit: None,
        assignment: None,
        inversion: None,
        failure: None,
    };
    if let Err(f) = run_pixel(rec, cfg, &mut px) {
        px.failure = Some(f);
    }
    px
}

fn run_pixel(rec: &ScanRecord, cfg: &PipelineConfig, px: &mut Pixel) -> std::result::Result<(), Failure> {
    use FailureReason::*;
    let n = cfg.components;
    if rec.trace.is_undersampled(n) {
        return Err(fail(Undersampled, format!("{} points for {n} components", rec.trace.len())));
    }
    let guess = initial_guess(&rec.trace, n).map_err(|e| match e {
        Error::FeatureCount { .. } => fail(FeatureCount, e.to_string()),
        other => fail(FitNotConverged, other.to_string()),
    })?;
    let fit = fit_spectrum(&rec.trace, &guess).map_err(|e| fail(FitNotConverged, e.to_string()))?;
    if !fit.converged {
        let detail = format!("{:?} after {} iterations", fit.termination, fit.iterations);
        px.fit = Some(fit);
        return Err(fail(FitNotConverged, detail));
    }
    let Some(unc) = &fit.uncertainty else {
        px.fit = Some(fit);
        return Err(fail(NoUncertainty, "singular spectrum covariance"));
    };
    let mut pairs: Vec<(f64, f64)> = fit.model.centers.iter().copied().zip(unc.centers.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    px.centers = pairs.iter().map(|p| p.0).collect();
    px.center_sigmas = pairs.iter().map(|p| p.1).collect();
    px.fit = Some(fit);

    let assign = match &cfg.assignment {
        Some(a) => a.clone(),
        None => nearest_assignment(&cfg.spin, &cfg.inversion.seed(), &cfg.inversion.rotation, &px.centers)
            .map_err(|e| fail(Assignment, e.to_string()))?,
    };
    px.assignment = Some(assign.clone());

    // fits with zero residual can report σ = 0; fall back to the assumed σ
    let sigmas = px
        .center_sigmas
        .iter()
        .map(|&s| if s > 0.0 && s.is_finite() { s } else { cfg.inversion.assumed_sigma })
        .collect();
    let m = Measurement::new(px.centers.clone(), Some(sigmas)).map_err(|e| fail(InversionFailed, e.to_string()))?;
    let res = invert(&cfg.spin, &m, &cfg.inversion, &assign).map_err(|e| fail(InversionFailed, e.to_string()))?;
    px.inversion = Some(res);
    Ok(())
}

/// Runs every record on the rayon pool; output order follows the input
/// order, which [`super::ingest`] sorts by position.
pub fn process(records: &[ScanRecord], cfg: &PipelineConfig) -> Result<FieldMap> {
    cfg.validate()?;
    let mut seen = BTreeMap::new();
    for r in records {
        if let Some(first) = seen.insert(((r.y_mm + 0.0).to_bits(), (r.z_mm + 0.0).to_bits()), &r.source) {
            return Err(Error::DuplicatePosition {
                y_mm: r.y_mm,
                z_mm: r.z_mm,
                first: first.clone(),
                second: r.source.clone(),
            });
        }
    }
    let pixels: Vec<Pixel> = records.par_iter().map(|r| process_record(r, cfg)).collect();

    let mut failures = BTreeMap::new();
    for p in &pixels {
        if let Some(f) = &p.failure {
            *failures.entry(f.reason).or_insert(0) += 1;
        }
    }
    let n_failed: usize = failures.values().sum();
    let warning = (!pixels.is_empty() && n_failed as f64 > FAILURE_WARNING_FRACTION * pixels.len() as f64).then(|| {
        let hist: Vec<String> = failures.iter().map(|(r, c)| format!("{r}={c}")).collect();
        format!(
            "{n_failed} of {} pixels failed ({:.0}%): {}",
            pixels.len(),
            100.0 * n_failed as f64 / pixels.len() as f64,
            hist.join(", ")
        )
    });
    let ok = || pixels.iter().filter_map(|p| p.ok().then_some(p.inversion.as_ref()).flatten());
    let summary = MapSummary {
        n_pixels: pixels.len(),
        n_failed,
        n_unique: ok().filter(|r| r.unique).count(),
        n_mismatch: ok().filter(|r| r.mismatch).count(),
        failures,
        warning,
    };
    let positions: Vec<(f64, f64)> = pixels.iter().map(|p| (p.y_mm, p.z_mm)).collect();
    Ok(FieldMap {
        grid: grid_report(&positions, &cfg.grid),
        components: cfg.components,
        pixels,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralStats {
    pub n: usize,
    /// Unweighted means of `(B_M [mT], θ [deg], φ [deg])`.
    pub mean: [f64; 3],
    /// Sample standard deviations (n − 1).
    pub std_dev: [f64; 3],
    /// `std_dev / √n`; NaN when `n < 2`.
    pub std_err: [f64; 3],
}

impl CentralStats {
    pub fn mean_field(&self) -> SphericalField {
        SphericalField {
            b_m: self.mean[0],
            theta_deg: self.mean[1],
            phi_deg: self.mean[2],
        }
    }
}

/// Statistics over successfully inverted rows inside `region`.
pub fn central_stats(rows: &[FieldRow], region: &Region) -> Result<CentralStats> {
    let inside: Vec<&FieldRow> = rows.iter().filter(|r| region.contains(r.y_mm, r.z_mm)).collect();
    if inside.is_empty() {
        return Err(Error::EmptySelection(format!(
            "region y[{}, {}] z[{}, {}] contains no pixels",
            region.y0, region.y1, region.z0, region.z1
        )));
    }
    let good: Vec<[f64; 3]> = inside
        .iter()
        .filter(|r| r.b_mt.is_finite())
        .map(|r| [r.b_mt, r.theta_deg, r.phi_deg])
        .collect();
    if good.is_empty() {
        return Err(Error::EmptySelection(format!(
            "all {} pixels in the region failed",
            inside.len()
        )));
    }
    // average φ as offsets from the first pixel so a ±180° seam does not split the set
    let phi_ref = good[0][2];
    let vals: Vec<[f64; 3]> = good
        .iter()
        .map(|v| [v[0], v[1], phi_ref + wrap_degrees(v[2] - phi_ref)])
        .collect();
    let n = vals.len();
    let nf = n as f64;
    let mut mean = [0.0; 3];
    let mut std_dev = [f64::NAN; 3];
    let mut std_err = [f64::NAN; 3];
    for k in 0..3 {
        mean[k] = vals.iter().map(|v| v[k]).sum::<f64>() / nf;
        if n > 1 {
            let var = vals.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / (nf - 1.0);
            std_dev[k] = var.sqrt();
            std_err[k] = std_dev[k] / nf.sqrt();
        }
    }
    mean[2] = wrap_degrees(mean[2]);
    Ok(CentralStats {
        n,
        mean,
        std_dev,
        std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(y: f64, z: f64, b: f64, t: f64, p: f64) -> FieldRow {
        FieldRow {
            y_mm: y,
            z_mm: z,
            b_mt: b,
            theta_deg: t,
            phi_deg: p,
            sigma_b: 0.0,
            sigma_theta: 0.0,
            sigma_phi: 0.0,
            residual_mhz: 0.0,
            unique: true,
        }
    }

    #[test]
    fn stats_over_region() {
        let rows = vec![
            row(0.0, 0.0, 100.0, 30.0, 10.0),
            row(0.0, 1.0, 102.0, 32.0, 12.0),
            row(5.0, 5.0, 500.0, 0.0, 0.0),
        ];
        let s = central_stats(&rows, &Region::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.mean, [101.0, 31.0, 11.0]);
        assert!((s.std_err[0] - 1.0).abs() < 1e-12);
        let all = central_stats(&rows, &Region::new(-1.0, 9.0, -1.0, 9.0).unwrap()).unwrap();
        assert_eq!(all.n, 3);
        assert!(matches!(
            central_stats(&rows, &Region::new(20.0, 30.0, 0.0, 1.0).unwrap()),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn phi_mean_across_seam() {
        let rows = vec![row(0.0, 0.0, 1.0, 0.0, 179.0), row(0.0, 1.0, 1.0, 0.0, -179.0)];
        let s = central_stats(&rows, &Region::new(0.0, 0.0, 0.0, 1.0).unwrap()).unwrap();
        assert!((s.mean[2].abs() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn failed_rows_are_skipped_but_counted_as_selected() {
        let mut bad = row(0.0, 1.0, 0.0, 0.0, 0.0);
        bad.b_mt = f64::NAN;
        let rows = vec![row(0.0, 0.0, 1.0, 2.0, 3.0), bad];
        let s = central_stats(&rows, &Region::new(0.0, 0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(s.n, 1);
        assert!(s.std_err[0].is_nan());
        assert!(central_stats(&rows[1..], &Region::new(0.0, 0.0, 0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn nan_rows_compare_equal() {
        let mut a = row(0.0, 0.0, 1.0, 2.0, 3.0);
        a.b_mt = f64::NAN;
        assert_eq!(a, a);
    }
}

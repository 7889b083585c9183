//! Forward-modeled grid scans for testing the pipeline end to end.
//!
//! Each pixel's sweep samples `±half_width` around that pixel's own predicted
//! lines. Real scans use fixed windows chosen from a survey sweep; placing
//! them per pixel keeps every line inside its window for any mild gradient.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::crystal::{cartesian_to_spherical, spherical_to_cartesian, FrameRotation, SphericalField};
use crate::error::{Error, Result};
use crate::inversion::{predict_frequencies, TransitionAssignment};
use crate::spectrum::{synthesize, windowed_grid, SpectrumModel, PEAK_FACTOR};
use crate::spinmodel::SpinModelParams;

use super::config::GridSteps;
use super::ingest::ScanRecord;

/// Smooth bore field: quadratic magnitude growth away from the center plus
/// optional linear angle gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProfile {
    pub center: SphericalField,
    pub y_c: f64,
    pub z_c: f64,
    /// Fractional magnitude increase at 10 mm from the center.
    pub curvature: f64,
    pub theta_per_mm: f64,
    pub phi_per_mm: f64,
}

impl FieldProfile {
    pub fn halbach() -> Self {
        Self {
            center: SphericalField {
                b_m: 104.5,
                theta_deg: 35.46,
                phi_deg: -2.43,
            },
            y_c: 15.0,
            z_c: 10.0,
            curvature: 0.003,
            theta_per_mm: 0.0,
            phi_per_mm: 0.0,
        }
    }

    pub fn uniform(field: SphericalField) -> Self {
        Self {
            center: field,
            curvature: 0.0,
            ..Self::halbach()
        }
    }

    /// Lab-frame field at a stage position.
    pub fn at(&self, y: f64, z: f64) -> SphericalField {
        let (dy, dz) = (y - self.y_c, z - self.z_c);
        SphericalField {
            b_m: self.center.b_m * (1.0 + self.curvature * (dy * dy + dz * dz) / 100.0),
            theta_deg: self.center.theta_deg + self.theta_per_mm * dy,
            phi_deg: self.center.phi_deg + self.phi_per_mm * dz,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub y0: f64,
    pub y_extent: f64,
    pub z0: f64,
    pub z_extent: f64,
    pub steps: GridSteps,
    pub profile: FieldProfile,
    /// MHz.
    pub fwhm: f64,
    pub amplitude: f64,
    /// Derivative-lobe height over noise σ.
    pub snr: f64,
    pub half_width: f64,
    pub freq_step: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            y0: 0.0,
            y_extent: 30.0,
            z0: 0.0,
            z_extent: 20.0,
            steps: GridSteps::default(),
            profile: FieldProfile::halbach(),
            fwhm: 11.48,
            amplitude: 1.0,
            snr: 20.0,
            half_width: 20.0,
            freq_step: 1.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn noise_sigma(&self) -> f64 {
        if self.snr.is_infinite() {
            0.0
        } else {
            self.amplitude.abs() * PEAK_FACTOR / self.snr
        }
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        let ny = (self.y_extent / self.steps.y_step).round() as usize;
        let nz = (self.z_extent / self.steps.z_step).round() as usize;
        (0..=ny)
            .flat_map(|i| (0..=nz).map(move |j| (i, j)))
            .map(|(i, j)| (self.y0 + i as f64 * self.steps.y_step, self.z0 + j as f64 * self.steps.z_step))
            .collect()
    }
}

/// A synthetic record and the lab-frame field that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPixel {
    pub record: ScanRecord,
    pub truth: SphericalField,
    pub lines: Vec<f64>,
}

fn pixel_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn synth_scan(
    p: &SpinModelParams,
    assign: &TransitionAssignment,
    rotation: &FrameRotation,
    cfg: &SynthConfig,
) -> Result<Vec<SynthPixel>> {
    if !(cfg.snr > 0.0) || !(cfg.fwhm > 0.0) || !(cfg.freq_step > 0.0) || !(cfg.half_width > 0.0) {
        return Err(Error::InvalidParameter("synth: snr, fwhm, half_width and freq_step must be > 0".into()));
    }
    cfg.positions()
        .into_iter()
        .enumerate()
        .map(|(i, (y, z))| {
            let truth = cfg.profile.at(y, z);
            let crystal = cartesian_to_spherical(&rotation.lab_to_crystal(&spherical_to_cartesian(&truth)));
            let mut lines = predict_frequencies(p, &crystal, assign).freqs;
            lines.sort_by(f64::total_cmp);
            let model = SpectrumModel::new(lines.clone(), vec![cfg.amplitude; lines.len()], cfg.fwhm, 0.0)?;
            let freqs = windowed_grid(&lines, cfg.half_width, cfg.freq_step);
            let trace = synthesize(&model, &freqs, cfg.noise_sigma(), pixel_seed(cfg.seed, i))?.with_position(y, z);
            Ok(SynthPixel {
                record: ScanRecord {
                    y_mm: y,
                    z_mm: z,
                    trace,
                    source: format!("synth#{i}"),
                },
                truth,
                lines,
            })
        })
        .collect()
}

pub const TRUTH_HEADER: &str = "y_mm,z_mm,B_mT,theta_deg,phi_deg";

pub fn write_truth_csv(path: &Path, pixels: &[SynthPixel]) -> Result<()> {
    let mut s = format!("{TRUTH_HEADER}\n");
    for px in pixels {
        let t = &px.truth;
        let _ = writeln!(s, "{},{},{},{},{}", px.record.y_mm, px.record.z_mm, t.b_m, t.theta_deg, t.phi_deg);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! # comment
//! spinmodel.d_zfs_MHz = 2870
//! inversion.nominal_mT = 104.5
//! assignment = 1:dq,4:dq,3:minus,2:minus
//! stats.region = 10,20,7.5,12.5
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::crystal::FrameRotation;
use crate::error::{Error, Result};
use crate::inversion::{InversionConfig, TransitionAssignment};
use crate::spectrum::{DEFAULT_COMPONENTS, MAX_COMPONENTS};
use crate::spinmodel::SpinModelParams;

/// Axis-aligned rectangle in scan coordinates (mm), bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub y0: f64,
    pub y1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Region {
    pub fn new(y0: f64, y1: f64, z0: f64, z1: f64) -> Result<Self> {
        if [y0, y1, z0, z1].iter().any(|v| !v.is_finite()) || y1 < y0 || z1 < z0 {
            return Err(Error::InvalidParameter(format!(
                "region y[{y0}, {y1}] z[{z0}, {z1}] is not a finite rectangle"
            )));
        }
        Ok(Self { y0, y1, z0, z1 })
    }

    /// `width × height` mm centered on `(yc, zc)`.
    pub fn centered(yc: f64, zc: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(yc - width / 2.0, yc + width / 2.0, zc - height / 2.0, zc + height / 2.0)
    }

    pub fn contains(&self, y: f64, z: f64) -> bool {
        const EPS: f64 = 1e-9;
        y >= self.y0 - EPS && y <= self.y1 + EPS && z >= self.z0 - EPS && z <= self.z1 + EPS
    }
}

/// Nominal scan steps (mm), used for the completeness report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSteps {
    pub y_step: f64,
    pub z_step: f64,
}

impl Default for GridSteps {
    fn default() -> Self {
        Self { y_step: 1.5, z_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spin: SpinModelParams,
    /// Includes the optional lab-to-crystal rotation.
    pub inversion: InversionConfig,
    /// `None`: nearest-predicted matching at the seed field, per pixel.
    pub assignment: Option<TransitionAssignment>,
    pub components: usize,
    /// Region for `central_stats`; `None` means the whole grid.
    pub region: Option<Region>,
    pub grid: GridSteps,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            spin: SpinModelParams::default(),
            inversion: InversionConfig::default(),
            assignment: None,
            components: DEFAULT_COMPONENTS,
            region: None,
            grid: GridSteps::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.spin.validate()?;
        self.inversion.validate()?;
        if self.components == 0 || self.components > MAX_COMPONENTS {
            return Err(Error::Config(format!(
                "spectrum.components = {} outside 1..={MAX_COMPONENTS}",
                self.components
            )));
        }
        if let Some(a) = &self.assignment {
            if a.len() != self.components {
                return Err(Error::Config(format!(
                    "assignment has {} entries but spectrum.components = {}",
                    a.len(),
                    self.components
                )));
            }
        }
        if !(self.grid.y_step > 0.0 && self.grid.z_step > 0.0) {
            return Err(Error::Config("grid steps must be > 0".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses config text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(m) | Error::InvalidParameter(m) => err(m),
                other => err(other.to_string()),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: {value:?} is not a number")))
        };
        let int = || -> Result<u64> {
            let v = value.trim_start_matches("0x");
            let radix = if value.starts_with("0x") { 16 } else { 10 };
            u64::from_str_radix(v, radix).map_err(|_| Error::Config(format!("{key}: {value:?} is not an integer")))
        };
        let list = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("{key}: {s:?} is not a number")))
                })
                .collect()
        };
        let inv = &mut self.inversion;
        match key {
            "spinmodel.d_zfs_MHz" => self.spin.d_zfs = num()?,
            "spinmodel.gamma_MHz_per_mT" => self.spin.gamma = num()?,
            "inversion.nominal_mT" => inv.nominal_b = num()?,
            "inversion.band" => inv.magnitude_band = num()?,
            "inversion.theta0_deg" => inv.theta0_deg = num()?,
            "inversion.phi0_deg" => inv.phi0_deg = num()?,
            "inversion.multistart" => inv.multistart = int()? as usize,
            "inversion.seed_spread_deg" => inv.seed_spread_deg = num()?,
            "inversion.sigma_MHz" => inv.assumed_sigma = num()?,
            "inversion.seed" => inv.rng_seed = int()?,
            "inversion.max_iter" => inv.max_iterations = int()? as usize,
            "inversion.x_tol" => inv.x_tol = num()?,
            "spectrum.components" => self.components = int()? as usize,
            "assignment" => {
                self.assignment = match value {
                    "" | "auto" | "nearest" => None,
                    s => Some(s.parse()?),
                }
            }
            "crystal.rotation" => {
                let v = list()?;
                if v.len() != 9 {
                    return Err(Error::Config(format!("crystal.rotation needs 9 values, got {}", v.len())));
                }
                inv.rotation = FrameRotation::from_row_slice(&v)?;
            }
            "stats.region" => {
                let v = list()?;
                let [y0, y1, z0, z1] = v[..] else {
                    return Err(Error::Config("stats.region needs y0,y1,z0,z1".into()));
                };
                self.region = Some(Region::new(y0, y1, z0, z1)?);
            }
            "grid.y_step_mm" => self.grid.y_step = num()?,
            "grid.z_step_mm" => self.grid.z_step = num()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Serializes to the text form accepted by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let inv = &self.inversion;
        let mut s = String::new();
        let _ = writeln!(s, "spinmodel.d_zfs_MHz = {}", self.spin.d_zfs);
        let _ = writeln!(s, "spinmodel.gamma_MHz_per_mT = {}", self.spin.gamma);
        let _ = writeln!(s, "inversion.nominal_mT = {}", inv.nominal_b);
        let _ = writeln!(s, "inversion.band = {}", inv.magnitude_band);
        let _ = writeln!(s, "inversion.theta0_deg = {}", inv.theta0_deg);
        let _ = writeln!(s, "inversion.phi0_deg = {}", inv.phi0_deg);
        let _ = writeln!(s, "inversion.multistart = {}", inv.multistart);
        let _ = writeln!(s, "inversion.seed_spread_deg = {}", inv.seed_spread_deg);
        let _ = writeln!(s, "inversion.sigma_MHz = {}", inv.assumed_sigma);
        let _ = writeln!(s, "inversion.seed = {}", inv.rng_seed);
        let _ = writeln!(s, "inversion.max_iter = {}", inv.max_iterations);
        let _ = writeln!(s, "inversion.x_tol = {}", inv.x_tol);
        let _ = writeln!(s, "spectrum.components = {}", self.components);
        match &self.assignment {
            Some(a) => _ = writeln!(s, "assignment = {a}"),
            None => _ = writeln!(s, "assignment = nearest"),
        }
        let m = inv.rotation.matrix();
        let rows: Vec<String> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].to_string())
            .collect();
        let _ = writeln!(s, "crystal.rotation = {}", rows.join(","));
        if let Some(r) = &self.region {
            let _ = writeln!(s, "stats.region = {},{},{},{}", r.y0, r.y1, r.z0, r.z1);
        }
        let _ = writeln!(s, "grid.y_step_mm = {}", self.grid.y_step);
        let _ = writeln!(s, "grid.z_step_mm = {}", self.grid.z_step);
        s
    }
}

//! `nvmag` command line. Exit codes: 0 success, 1 data error, 2 usage error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::crystal::{SphericalField, Vec3};
use crate::error::Error;
use crate::inversion::{invert, nearest_assignment, uniqueness_scan, Measurement, TransitionAssignment};
use crate::noise::{
    asd_averaged_with, band_sensitivity, read_time_series, volts_to_field, write_asd, AsdOptions, Averaging,
    SlopeCalibration, Window,
};
use crate::spectrum::{fit_spectrum, initial_guess};
use crate::spinmodel::{sweep_vs_angle, sweep_vs_field, AngleSweep, Sweep};

use super::config::{PipelineConfig, Region};
use super::emit::{emit, read_field_map, EmitOptions, FIELD_MAP_FILE};
use super::ingest::{ingest, read_trace, write_scan_csv};
use super::process::{central_stats, process};
use super::synth::{synth_scan, write_truth_csv, FieldProfile, SynthConfig};

/// Transitions probed in the 3.8–5 GHz band near 104.5 mT, ascending.
pub const HALBACH_ASSIGNMENT: &str = "1:dq,4:dq,3:minus,2:minus";

#[derive(Debug, Parser)]
#[command(name = "nvmag", version, about = "NV-diamond vector magnetometry toolkit")]
pub struct Cli {
    /// Pipeline config file (key = value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition frequencies versus field magnitude or angle.
    Sweep(SweepArgs),
    /// Generate a synthetic grid scan.
    Synth(SynthArgs),
    /// Fit a single derivative-Lorentzian trace.
    Fit(FitArgs),
    /// Convert line centers to a field vector.
    Invert(InvertArgs),
    /// Amplitude spectral density of a time series.
    Asd(AsdArgs),
    /// Full pipeline: ingest, fit, invert, write maps.
    Map(MapArgs),
    /// Means and standard errors over a region of a field map.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AngleKind {
    Theta,
    Phi,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Field direction: Miller indices (100, 111, -110) or x,y,z.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "vary")]
    pub direction: Option<String>,
    #[arg(long = "bmax-mT", default_value_t = 150.0)]
    pub bmax_mt: f64,
    /// Sweep an angle at fixed magnitude instead.
    #[arg(long, value_enum)]
    pub vary: Option<AngleKind>,
    #[arg(long = "b-mT", default_value_t = 104.5)]
    pub b_mt: f64,
    /// Fixed θ for a φ sweep.
    #[arg(long = "theta-deg", default_value_t = 35.46, allow_hyphen_values = true)]
    pub theta_deg: f64,
    /// Fixed φ for a θ sweep.
    #[arg(long = "phi-deg", default_value_t = -2.43, allow_hyphen_values = true)]
    pub phi_deg: f64,
    #[arg(long, default_value_t = 150)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Receives scans/scan.csv and truth.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    #[arg(long = "fwhm-MHz", default_value_t = 11.48)]
    pub fwhm: f64,
    #[arg(long = "y-extent-mm", default_value_t = 30.0)]
    pub y_extent: f64,
    #[arg(long = "z-extent-mm", default_value_t = 20.0)]
    pub z_extent: f64,
    #[arg(long = "b-mT", default_value_t = 104.5)]
    pub b_mt: f64,
    #[arg(long = "theta-deg", default_value_t = 35.46, allow_hyphen_values = true)]
    pub theta_deg: f64,
    #[arg(long = "phi-deg", default_value_t = -2.43, allow_hyphen_values = true)]
    pub phi_deg: f64,
    /// Fractional magnitude increase 10 mm from the center.
    #[arg(long, default_value_t = 0.003, allow_hyphen_values = true)]
    pub curvature: f64,
    #[arg(long)]
    pub assignment: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with freq_MHz and signal columns.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Line centers in MHz, ascending.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub freqs: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long = "nominal-mT")]
    pub nominal_mt: Option<f64>,
    #[arg(long = "theta0-deg", allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long = "phi0-deg", allow_hyphen_values = true)]
    pub phi0: Option<f64>,
    #[arg(long)]
    pub assignment: Option<String>,
    #[arg(long)]
    pub multistart: Option<usize>,
    /// List every distinct local minimum.
    #[arg(long)]
    pub scan: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WindowArg {
    Rect,
    Hann,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    Power,
    Amplitude,
}

#[derive(Debug, Args)]
pub struct AsdArgs {
    /// CSV with t_s,value columns.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "segment-s", default_value_t = 1.0)]
    pub segment_s: f64,
    /// lo,hi in Hz.
    #[arg(long, value_delimiter = ',', default_values_t = [60.0, 90.0])]
    pub band: Vec<f64>,
    #[arg(long, value_enum, default_value_t = WindowArg::Rect)]
    pub window: WindowArg,
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
    #[arg(long, value_enum, default_value_t = AveragingArg::Power)]
    pub averaging: AveragingArg,
    /// Lock-in slope (V/Hz); converts a voltage record to tesla first.
    #[arg(long = "slope-V-per-Hz", allow_hyphen_values = true)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Scan CSV or directory of scan CSVs.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write 16-bit PGM rasters.
    #[arg(long)]
    pub raster: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Field-map CSV, or the directory holding it.
    #[arg(long)]
    pub map: PathBuf,
    /// y0,y1,z0,z1 in mm; defaults to the config region, else the whole map.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub region: Option<Vec<f64>>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "usage error: {m}");
            2
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> std::result::Result<PipelineConfig, Failure> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn emit_text(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e).into()),
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Sweep(a) => cmd_sweep(&cfg, a, out),
        Command::Synth(a) => cmd_synth(&cfg, a, out),
        Command::Fit(a) => cmd_fit(&cfg, a, out),
        Command::Invert(a) => cmd_invert(cfg, a, out),
        Command::Asd(a) => cmd_asd(&cfg, a, out),
        Command::Map(a) => cmd_map(&cfg, a, out, err),
        Command::Stats(a) => cmd_stats(&cfg, a, out),
    }
}

pub fn parse_direction(s: &str) -> Option<Vec3> {
    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
    let v: Vec<f64> = if s.contains(',') {
        s.split(',').map(|c| c.trim().parse().ok()).collect::<Option<_>>()?
    } else {
        let mut v = Vec::new();
        let mut neg = false;
        for ch in s.chars() {
            match ch {
                '-' => neg = true,
                d => {
                    let x = d.to_digit(10)? as f64;
                    v.push(if neg { -x } else { x });
                    neg = false;
                }
            }
        }
        v
    };
    let [x, y, z] = v[..] else { return None };
    let d = Vec3::new(x, y, z);
    (d.norm() > 0.0 && d.iter().all(|c| c.is_finite())).then_some(d)
}

fn sweep_csv(sweep: &Sweep) -> String {
    let mut s = String::from("sweep_value,axis,transition,freq_MHz,strength\n");
    for p in sweep.points() {
        let _ = writeln!(s, "{},{},{},{},{}", p.sweep_value, p.axis, p.transition, p.freq, p.strength);
    }
    s
}

fn cmd_sweep(cfg: &PipelineConfig, a: SweepArgs, out: &mut dyn Write) -> CmdResult {
    if a.steps == 0 {
        return Err(Failure::Usage("--steps must be >= 1".into()));
    }
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..=a.steps).map(|i| lo + (hi - lo) * i as f64 / a.steps as f64).collect()
    };
    let sweep = match (a.vary, &a.direction) {
        (Some(kind), _) => {
            let (mode, angles) = match kind {
                AngleKind::Theta => (AngleSweep::Theta { phi_deg: a.phi_deg }, grid(-90.0, 90.0)),
                AngleKind::Phi => (AngleSweep::Phi { theta_deg: a.theta_deg }, grid(-180.0, 180.0)),
            };
            sweep_vs_angle(&cfg.spin, a.b_mt, mode, &angles)?
        }
        (None, dir) => {
            let d = dir.as_deref().unwrap_or("100");
            let d = parse_direction(d).ok_or_else(|| Failure::Usage(format!("cannot parse direction {d:?}")))?;
            sweep_vs_field(&cfg.spin, &d, &grid(0.0, a.bmax_mt))?
        }
    };
    emit_text(out, a.out.as_deref(), &sweep_csv(&sweep))
}

fn cmd_synth(cfg: &PipelineConfig, a: SynthArgs, out: &mut dyn Write) -> CmdResult {
    let assign: TransitionAssignment = match (&a.assignment, &cfg.assignment) {
        (Some(s), _) => s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?,
        (None, Some(c)) => c.clone(),
        (None, None) => HALBACH_ASSIGNMENT.parse()?,
    };
    let center = SphericalField::new(a.b_mt, a.theta_deg, a.phi_deg).map_err(|e| Failure::Usage(e.to_string()))?;
    let scfg = SynthConfig {
        y_extent: a.y_extent,
        z_extent: a.z_extent,
        steps: cfg.grid,
        profile: FieldProfile {
            center,
            y_c: a.y_extent / 2.0,
            z_c: a.z_extent / 2.0,
            curvature: a.curvature,
            ..FieldProfile::halbach()
        },
        fwhm: a.fwhm,
        snr: a.snr,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let pixels = synth_scan(&cfg.spin, &assign, &cfg.inversion.rotation, &scfg)?;
    let scans = a.out.join("scans");
    fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let records: Vec<_> = pixels.iter().map(|p| p.record.clone()).collect();
    write_scan_csv(&scans.join("scan.csv"), &records)?;
    write_truth_csv(&a.out.join("truth.csv"), &pixels)?;
    let msg = format!(
        "wrote {} positions ({} points each) to {}\n",
        pixels.len(),
        records.first().map_or(0, |r| r.trace.len()),
        a.out.display()
    );
    emit_text(out, None, &msg)
}

fn cmd_fit(cfg: &PipelineConfig, a: FitArgs, out: &mut dyn Write) -> CmdResult {
    let trace = read_trace(&a.input)?;
    let n = a.components.unwrap_or(cfg.components);
    let guess = initial_guess(&trace, n)?;
    let fit = fit_spectrum(&trace, &guess)?;
    let mut s = String::new();
    let unc = fit.uncertainty.as_ref();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| fit.model.centers[i].total_cmp(&fit.model.centers[j]));
    for (k, &i) in order.iter().enumerate() {
        let _ = writeln!(
            s,
            "line {}: center_MHz={} sigma={} amplitude={} sigma={}",
            k + 1,
            fit.model.centers[i],
            unc.map_or(f64::NAN, |u| u.centers[i]),
            fit.model.amplitudes[i],
            unc.map_or(f64::NAN, |u| u.amplitudes[i])
        );
    }
    let _ = writeln!(s, "fwhm_MHz={} sigma={}", fit.model.fwhm, unc.map_or(f64::NAN, |u| u.fwhm));
    let _ = writeln!(s, "baseline={} sigma={}", fit.model.baseline, unc.map_or(f64::NAN, |u| u.baseline));
    let _ = writeln!(
        s,
        "residual_rms={} converged={} iterations={} termination={:?}",
        fit.residual_rms, fit.converged, fit.iterations, fit.termination
    );
    emit_text(out, None, &s)?;
    if !fit.converged {
        return Err(Error::InvalidParameter(format!("fit did not converge: {:?}", fit.termination)).into());
    }
    Ok(())
}

fn cmd_invert(mut cfg: PipelineConfig, a: InvertArgs, out: &mut dyn Write) -> CmdResult {
    let inv = &mut cfg.inversion;
    if let Some(v) = a.nominal_mt {
        inv.nominal_b = v;
    }
    if let Some(v) = a.theta0 {
        inv.theta0_deg = v;
    }
    if let Some(v) = a.phi0 {
        inv.phi0_deg = v;
    }
    if let Some(v) = a.multistart {
        inv.multistart = v;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut freqs = a.freqs.clone();
    let mut sigmas = a.sigmas.clone();
    if let Some(s) = &sigmas {
        if s.len() != freqs.len() {
            return Err(Failure::Usage("--sigmas needs one value per frequency".into()));
        }
    }
    // keep σ attached to its line while sorting ascending
    let mut idx: Vec<usize> = (0..freqs.len()).collect();
    idx.sort_by(|&i, &j| freqs[i].total_cmp(&freqs[j]));
    freqs = idx.iter().map(|&i| a.freqs[i]).collect();
    if let Some(s) = &mut sigmas {
        *s = idx.iter().map(|&i| s[i]).collect();
    }
    let assign = match (&a.assignment, &cfg.assignment) {
        (Some(s), _) => s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?,
        (None, Some(c)) => c.clone(),
        (None, None) => nearest_assignment(&cfg.spin, &cfg.inversion.seed(), &cfg.inversion.rotation, &freqs)?,
    };
    if assign.len() != freqs.len() {
        return Err(Failure::Usage(format!(
            "{} frequencies but the assignment has {} entries",
            freqs.len(),
            assign.len()
        )));
    }
    let m = Measurement::new(freqs, sigmas)?;
    let r = invert(&cfg.spin, &m, &cfg.inversion, &assign)?;
    let mut s = String::new();
    let _ = writeln!(s, "assignment={assign}");
    let _ = writeln!(s, "B_mT={} sigma_B={}", r.field.b_m, r.sigma[0]);
    let _ = writeln!(s, "theta_deg={} sigma_theta={}", r.field.theta_deg, r.sigma[1]);
    let _ = writeln!(s, "phi_deg={} sigma_phi={}", r.field.phi_deg, r.sigma[2]);
    let _ = writeln!(s, "residual_MHz={} chi2={}", r.residual_mhz, r.chi2);
    let _ = writeln!(
        s,
        "unique={} mismatch={} at_bound={} minima={} starts={}",
        r.unique,
        r.mismatch,
        r.at_bound,
        r.minima.len(),
        r.starts.len()
    );
    if !r.unobservable.is_empty() {
        let _ = writeln!(s, "warning: unobservable assigned lines at indices {:?}", r.unobservable);
    }
    if a.scan {
        let scan_cfg = crate::inversion::InversionConfig {
            multistart: cfg.inversion.multistart.max(8),
            ..cfg.inversion.clone()
        };
        for (k, mn) in uniqueness_scan(&cfg.spin, &m, &scan_cfg, &assign)?.iter().enumerate() {
            let _ = writeln!(
                s,
                "minimum {}: B_mT={} theta_deg={} phi_deg={} residual_MHz={} starts={}",
                k + 1,
                mn.field.b_m,
                mn.field.theta_deg,
                mn.field.phi_deg,
                mn.residual_mhz,
                mn.members
            );
        }
    }
    emit_text(out, None, &s)
}

fn cmd_asd(cfg: &PipelineConfig, a: AsdArgs, out: &mut dyn Write) -> CmdResult {
    if a.band.len() != 2 {
        return Err(Failure::Usage("--band takes lo,hi".into()));
    }
    let (mut ts, unit) = read_time_series(&a.input)?;
    let mut unit = unit
        .as_deref()
        .and_then(|u| u.split(',').find_map(|p| p.trim().strip_prefix("value=").map(str::to_string)))
        .unwrap_or_else(|| "a.u.".into());
    if let Some(slope) = a.slope {
        ts = volts_to_field(
            &ts,
            &SlopeCalibration {
                slope,
                gamma: cfg.spin.gamma,
            },
        )?;
        unit = "T".into();
    }
    let opts = AsdOptions {
        window: match a.window {
            WindowArg::Rect => Window::Rectangular,
            WindowArg::Hann => Window::Hann,
        },
        overlap: a.overlap,
        averaging: match a.averaging {
            AveragingArg::Power => Averaging::Power,
            AveragingArg::Amplitude => Averaging::Amplitude,
        },
    };
    let asd = asd_averaged_with(&ts, a.segment_s, opts)?;
    if let Some(p) = &a.out {
        write_asd(p, &asd, &unit)?;
    }
    let level = band_sensitivity(&asd, a.band[0], a.band[1])?;
    let s = format!(
        "segments={} resolution_Hz={} window={:?} overlap={} averaging={:?}\nband_Hz={}-{} density={level} {unit}/sqrt(Hz)\n",
        asd.segment_count,
        asd.resolution(),
        opts.window,
        opts.overlap,
        opts.averaging,
        a.band[0],
        a.band[1]
    );
    emit_text(out, None, &s)
}

fn cmd_map(cfg: &PipelineConfig, a: MapArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let ing = ingest(&a.input, &cfg.grid)?;
    for w in &ing.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let map = process(&ing.records, cfg)?;
    if let Some(w) = &map.summary.warning {
        let _ = writeln!(err, "warning: {w}");
    }
    let files = emit(&map, &a.out, &EmitOptions { raster: a.raster })?;
    let sm = &map.summary;
    let mut s = format!(
        "pixels={} failed={} unique={} mismatch={}\n{}\n",
        sm.n_pixels,
        sm.n_failed,
        sm.n_unique,
        sm.n_mismatch,
        map.grid.summary()
    );
    if let Some(region) = &cfg.region {
        if let Ok(st) = central_stats(&map.rows(), region) {
            let _ = writeln!(s, "{}", stats_text(&st));
        }
    }
    for f in files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    emit_text(out, None, &s)
}

fn stats_text(st: &super::process::CentralStats) -> String {
    format!(
        "n={}\nB_mT={} se={}\ntheta_deg={} se={}\nphi_deg={} se={}",
        st.n, st.mean[0], st.std_err[0], st.mean[1], st.std_err[1], st.mean[2], st.std_err[2]
    )
}

fn cmd_stats(cfg: &PipelineConfig, a: StatsArgs, out: &mut dyn Write) -> CmdResult {
    // validate arguments before touching the filesystem
    let explicit = match a.region.as_deref() {
        None => None,
        Some(&[y0, y1, z0, z1]) => Some(Region::new(y0, y1, z0, z1).map_err(|e| Failure::Usage(e.to_string()))?),
        Some(_) => return Err(Failure::Usage("--region takes y0,y1,z0,z1".into())),
    };
    let path = if a.map.is_dir() { a.map.join(FIELD_MAP_FILE) } else { a.map.clone() };
    let rows = read_field_map(&path)?;
    let region = match explicit.or(cfg.region) {
        Some(r) => r,
        None => {
            let (mut y0, mut y1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for r in &rows {
                y0 = y0.min(r.y_mm);
                y1 = y1.max(r.y_mm);
                z0 = z0.min(r.z_mm);
                z1 = z1.max(r.z_mm);
            }
            Region::new(y0, y1, z0, z1)
                .map_err(|_| Error::EmptySelection(format!("{} holds no rows", path.display())))?
        }
    };
    let st = central_stats(&rows, &region)?;
    emit_text(out, None, &(stats_text(&st) + "\n"))
}

//! Time-series noise analysis.
//!
//! Densities are one-sided: for a segment of `N` samples at rate `fs` with
//! window `w`, `PSD_k = 2·|X_k|² / (fs·Σw²)` (DC and Nyquist bins are not
//! doubled) and `ASD = √PSD`. With this normalization `Σ PSD_k·Δf` equals
//! the mean square of the segment, and white noise of variance σ² sits at
//! `σ·√(2/fs)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::{Error, Result};

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate {sample_rate} must be > 0")));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidParameter("a time series needs at least 2 samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series".into()));
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |i| i as f64 / self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// How per-segment densities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// `√(mean PSD)`: unbiased for stationary noise.
    #[default]
    Power,
    /// `mean(ASD)`: biased low by `√π/2` for Gaussian noise.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AsdOptions {
    pub window: Window,
    /// Fractional overlap of consecutive segments, in `[0, 1)`.
    pub overlap: f64,
    pub averaging: Averaging,
}

impl AsdOptions {
    /// Hann window with 50 % overlap.
    pub fn welch() -> Self {
        Self {
            window: Window::Hann,
            overlap: 0.5,
            averaging: Averaging::Power,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsdResult {
    /// Bin frequencies (Hz), 0 to Nyquist.
    pub frequencies: Vec<f64>,
    /// Density in input units per √Hz.
    pub density: Vec<f64>,
    pub segment_count: usize,
    /// Seconds.
    pub segment_duration: f64,
    pub options: AsdOptions,
}

impl AsdResult {
    pub fn resolution(&self) -> f64 {
        1.0 / self.segment_duration
    }
}

struct SegmentPsd {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
}

impl SegmentPsd {
    fn new(n: usize, sample_rate: f64, window: Window) -> Self {
        let window = window.coefficients(n);
        let s2: f64 = window.iter().map(|w| w * w).sum();
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
            window,
            norm: sample_rate * s2,
        }
    }

    fn psd(&self, segment: &[f64]) -> Vec<f64> {
        let n = segment.len();
        let mut buf: Vec<Complex<f64>> = segment
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        (0..=n / 2)
            .map(|k| {
                let p = buf[k].norm_sqr() / self.norm;
                let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
                if edge {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }
}

/// One-sided power spectral density of a single segment.
pub fn segment_psd(segment: &[f64], sample_rate: f64, window: Window) -> Vec<f64> {
    SegmentPsd::new(segment.len(), sample_rate, window).psd(segment)
}

/// Splits `ts` into consecutive segments of `segment_duration` seconds and
/// averages their densities. Rectangular window, no overlap.
pub fn asd_averaged(ts: &TimeSeries, segment_duration: f64) -> Result<AsdResult> {
    asd_averaged_with(ts, segment_duration, AsdOptions::default())
}

pub fn asd_averaged_with(ts: &TimeSeries, segment_duration: f64, options: AsdOptions) -> Result<AsdResult> {
    if !(segment_duration.is_finite() && segment_duration > 0.0) {
        return Err(Error::InvalidParameter(format!("segment duration {segment_duration}")));
    }
    if !(0.0..1.0).contains(&options.overlap) {
        return Err(Error::InvalidParameter(format!("overlap {} outside [0, 1)", options.overlap)));
    }
    let n = (segment_duration * ts.sample_rate).round() as usize;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "segment of {segment_duration} s holds {n} samples; at least 2 are needed"
        )));
    }
    if n > ts.samples.len() {
        return Err(Error::InvalidParameter(format!(
            "segment of {segment_duration} s is longer than the {} s series",
            ts.duration()
        )));
    }
    let step = ((n as f64) * (1.0 - options.overlap)).round().max(1.0) as usize;
    let count = (ts.samples.len() - n) / step + 1;

    let engine = SegmentPsd::new(n, ts.sample_rate, options.window);
    let mut acc = vec![0.0; n / 2 + 1];
    for s in 0..count {
        let psd = engine.psd(&ts.samples[s * step..s * step + n]);
        match options.averaging {
            Averaging::Power => acc.iter_mut().zip(&psd).for_each(|(a, p)| *a += p),
            Averaging::Amplitude => acc.iter_mut().zip(&psd).for_each(|(a, p)| *a += p.sqrt()),
        }
    }
    let density = acc
        .into_iter()
        .map(|a| match options.averaging {
            Averaging::Power => (a / count as f64).sqrt(),
            Averaging::Amplitude => a / count as f64,
        })
        .collect();
    let df = ts.sample_rate / n as f64;
    Ok(AsdResult {
        frequencies: (0..=n / 2).map(|k| k as f64 * df).collect(),
        density,
        segment_count: count,
        segment_duration: n as f64 / ts.sample_rate,
        options,
    })
}

/// Mean density over the bins inside `[f_lo, f_hi]`.
pub fn band_sensitivity(asd: &AsdResult, f_lo: f64, f_hi: f64) -> Result<f64> {
    if !(f_lo <= f_hi) {
        return Err(Error::InvalidParameter(format!("band [{f_lo}, {f_hi}] is inverted")));
    }
    let (sum, count) = asd
        .frequencies
        .iter()
        .zip(&asd.density)
        .filter(|(f, _)| (f_lo..=f_hi).contains(*f))
        .fold((0.0, 0usize), |(s, c), (_, d)| (s + d, c + 1));
    if count == 0 {
        return Err(Error::EmptySelection(format!("no spectral bins in [{f_lo}, {f_hi}] Hz")));
    }
    Ok(sum / count as f64)
}

/// Lock-in slope and gyromagnetic ratio that convert volts to tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCalibration {
    /// Demodulated output per unit detuning (V/Hz), signed.
    pub slope: f64,
    /// γ/2π (MHz/mT).
    pub gamma: f64,
}

impl SlopeCalibration {
    /// Tesla per volt.
    pub fn scale(&self) -> Result<f64> {
        if self.slope == 0.0 || !self.slope.is_finite() {
            return Err(Error::InvalidParameter(format!("slope {} must be non-zero", self.slope)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma {} must be > 0", self.gamma)));
        }
        // MHz/mT → Hz/T
        Ok(1.0 / (self.slope * self.gamma * 1e9))
    }
}

/// `B(t) = V(t) / (slope·γ)`, returned in tesla.
pub fn volts_to_field(ts_volts: &TimeSeries, cal: &SlopeCalibration) -> Result<TimeSeries> {
    let k = cal.scale()?;
    Ok(TimeSeries {
        sample_rate: ts_volts.sample_rate,
        samples: ts_volts.samples.iter().map(|v| v * k).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneFit {
    /// Peak amplitude, `√(a² + b²)`.
    pub amplitude: f64,
    /// Phase ϕ in `A·cos(2πf₀t − ϕ)` (radians).
    pub phase: f64,
    pub offset: f64,
    /// 1σ of the amplitude from the residual scatter.
    pub amplitude_sigma: f64,
}

/// Least-squares fit of `a·cos(2πf₀t) + b·sin(2πf₀t) + c`.
pub fn extract_tone(ts: &TimeSeries, f0: f64) -> Result<ToneFit> {
    if f0 >= ts.nyquist() {
        return Err(Error::Aliasing {
            f0,
            nyquist: ts.nyquist(),
        });
    }
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::InvalidParameter(format!("tone frequency {f0} must be > 0")));
    }
    let w = 2.0 * std::f64::consts::PI * f0;
    let basis = |t: f64| Vector3::new((w * t).cos(), (w * t).sin(), 1.0);

    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (t, &y) in ts.times().zip(&ts.samples) {
        let row = basis(t);
        ata += row * row.transpose();
        aty += row * y;
    }
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter(format!("tone at {f0} Hz is not resolvable in this record")))?;
    let coef = inv * aty;
    let (a, b) = (coef[0], coef[1]);

    let ss: f64 = ts
        .times()
        .zip(&ts.samples)
        .map(|(t, &y)| (y - basis(t).dot(&coef)).powi(2))
        .sum();
    let dof = ts.samples.len().saturating_sub(3).max(1) as f64;
    let s2 = ss / dof;
    let amplitude = a.hypot(b);
    let var = if amplitude > 0.0 {
        (a * a * inv[(0, 0)] + b * b * inv[(1, 1)] + 2.0 * a * b * inv[(0, 1)]) / (amplitude * amplitude)
    } else {
        0.5 * (inv[(0, 0)] + inv[(1, 1)])
    };
    Ok(ToneFit {
        amplitude,
        phase: b.atan2(a),
        offset: coef[2],
        amplitude_sigma: (var.max(0.0) * s2).sqrt(),
    })
}

/// Shot-noise-limited sensitivity with the formula that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotNoiseEstimate {
    /// T/√Hz; `+∞` when the contrast is zero.
    pub sensitivity: f64,
    /// Photocurrent (A).
    pub photocurrent: f64,
    /// Lorentzian maximum-slope factor `4/(3√3)`.
    pub geometry_factor: f64,
    pub formula: &'static str,
}

pub const SHOT_NOISE_FORMULA: &str =
    "eta = (4/(3*sqrt(3))) * fwhm / (contrast * gamma) * sqrt(2 e / I), I = P_PL * responsivity";

/// Order-of-magnitude photon-shot-noise limit of a CW ODMR magnetometer.
///
/// `fwhm` in MHz, `gamma` in MHz/mT, `pl_power` in W, `responsivity` in A/W.
pub fn shot_noise_limit(pl_power: f64, contrast: f64, fwhm: f64, responsivity: f64, gamma: f64) -> Result<ShotNoiseEstimate> {
    for (name, v) in [("PL power", pl_power), ("fwhm", fwhm), ("responsivity", responsivity), ("gamma", gamma)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
        }
    }
    if !(contrast.is_finite() && contrast >= 0.0) {
        return Err(Error::InvalidParameter(format!("contrast = {contrast} must be >= 0")));
    }
    let geometry_factor = 4.0 / (3.0 * 3f64.sqrt());
    let photocurrent = pl_power * responsivity;
    let sensitivity = if contrast == 0.0 {
        f64::INFINITY
    } else {
        // MHz / (MHz/mT) = mT → T
        geometry_factor * fwhm / (contrast * gamma) * 1e-3 * (2.0 * ELEMENTARY_CHARGE / photocurrent).sqrt()
    };
    Ok(ShotNoiseEstimate {
        sensitivity,
        photocurrent,
        geometry_factor,
        formula: SHOT_NOISE_FORMULA,
    })
}

/// Reads a `t_s,value` CSV. `#` lines are comments; a `# units: ...` comment
/// is returned as the value unit. Sampling must be uniform.
pub fn read_time_series(path: &Path) -> Result<(TimeSeries, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut unit = None;
    let mut header_seen = false;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(u) = c.trim().strip_prefix("units:") {
                unit = Some(u.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            header_seen = true;
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["t_s", "value"] {
                return Err(parse_err(i + 1, format!("expected header t_s,value, found {line}")));
            }
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(i + 1, "expected 2 columns".into()));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, format!("{s:?}: {e}")));
        t.push(num(a)?);
        v.push(num(b)?);
    }
    if t.len() < 2 {
        return Err(parse_err(text.lines().count(), "fewer than 2 samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(parse_err(1, "time column must increase".into()));
    }
    if let Some(k) = t.windows(2).position(|w| ((w[1] - w[0]) / dt - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidParameter(format!(
            "{}: non-uniform sampling at sample {}",
            path.display(),
            k + 1
        )));
    }
    Ok((TimeSeries::new(1.0 / dt, v)?, unit))
}

pub fn write_time_series(path: &Path, ts: &TimeSeries, unit: &str) -> Result<()> {
    let mut out = format!("# units: t_s=s, value={unit}\nt_s,value\n");
    for (t, v) in ts.times().zip(&ts.samples) {
        let _ = writeln!(out, "{t},{v}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `freq_Hz,density` with the unit and averaging metadata as comments.
pub fn write_asd(path: &Path, asd: &AsdResult, unit: &str) -> Result<()> {
    let o = &asd.options;
    let mut out = format!(
        "# units: freq_Hz=Hz, density={unit}/sqrt(Hz)\n# segments={} segment_s={} window={:?} overlap={} averaging={:?}\nfreq_Hz,density\n",
        asd.segment_count, asd.segment_duration, o.window, o.overlap, o.averaging
    );
    for (f, d) in asd.frequencies.iter().zip(&asd.density) {
        let _ = writeln!(out, "{f},{d}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

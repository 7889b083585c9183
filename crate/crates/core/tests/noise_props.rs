//! Spectral density: exact Parseval identity and scaling properties.

use nvmag::noise::*;
use proptest::prelude::*;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Σ PSD·Δf from the time domain: DC and Nyquist appear once in the
/// one-sided density, every other bin is doubled, so the total is the
/// windowed energy over Σw².
fn parseval_total(x: &[f64], w: &[f64]) -> f64 {
    let energy: f64 = x.iter().zip(w).map(|(a, b)| (a * b).powi(2)).sum();
    energy / w.iter().map(|v| v * v).sum::<f64>()
}

proptest! {
    #[test]
    fn parseval_holds_exactly(
        half in 4usize..256, fs in 1.0f64..5000.0,
        x in prop::collection::vec(-10.0f64..10.0, 512), hann_window in any::<bool>(),
    ) {
        let n = 2 * half;
        let x = &x[..n];
        let (window, w) = if hann_window { (Window::Hann, hann(n)) } else { (Window::Rectangular, vec![1.0; n]) };
        let psd = segment_psd(x, fs, window);
        prop_assert_eq!(psd.len(), half + 1);
        let total: f64 = psd.iter().sum::<f64>() * fs / n as f64;
        let oracle = parseval_total(x, &w);
        prop_assert!((total - oracle).abs() <= 1e-9 * oracle.max(1e-12), "{} vs {}", total, oracle);
    }

    #[test]
    fn asd_scales_linearly(seed_vals in prop::collection::vec(-1.0f64..1.0, 400), k in 1e-6f64..1e6) {
        let ts = TimeSeries::new(100.0, seed_vals.clone()).unwrap();
        let scaled = TimeSeries::new(100.0, seed_vals.iter().map(|v| v * k).collect()).unwrap();
        let a = asd_averaged(&ts, 1.0).unwrap();
        let b = asd_averaged(&scaled, 1.0).unwrap();
        prop_assert_eq!(a.segment_count, 4);
        for (p, q) in a.density.iter().zip(&b.density) {
            prop_assert!((q - k * p).abs() <= 1e-9 * (k * p).max(1e-300));
        }
    }

    #[test]
    fn slope_calibration_is_linear(v in prop::collection::vec(-1.0f64..1.0, 16), slope in 1e-6f64..1.0) {
        let cal = SlopeCalibration { slope, gamma: 28.024 };
        let ts = TimeSeries::new(10.0, v.clone()).unwrap();
        let b = volts_to_field(&ts, &cal).unwrap();
        for (x, y) in v.iter().zip(&b.samples) {
            // volts → Hz → tesla
            let oracle = x / slope / 28.024e9;
            prop_assert!((y - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
        }
    }
}

//! Fit invariances and estimator consistency on four-line traces.

use nvmag::spectrum::*;
use proptest::prelude::*;

const LINES: [f64; 4] = [4043.56, 4252.26, 4609.46, 4648.07];

fn truth(shift: f64) -> SpectrumModel {
    SpectrumModel::new(LINES.iter().map(|c| c + shift).collect(), vec![1.0, 0.9, 1.1, 1.0], 11.48, 0.02).unwrap()
}

fn trace(model: &SpectrumModel, snr: f64, seed: u64) -> SweepTrace {
    let freqs = windowed_grid(&model.centers, 20.0, 1.0);
    synthesize(model, &freqs, PEAK_FACTOR / snr, seed).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scan_direction_invariant(seed in 0u64..1000, shift in -5.0f64..5.0) {
        let t = trace(&truth(shift), 20.0, seed);
        let guess = initial_guess(&t, 4).unwrap();
        let fwd = fit_spectrum(&t, &guess).unwrap();
        let mut f = t.freqs().to_vec();
        let mut v = t.values().to_vec();
        f.reverse();
        v.reverse();
        let rev = fit_points(&f, &v, &guess).unwrap();
        let (a, b) = (fwd.model.to_params(), rev.model.to_params());
        for k in 0..a.len() {
            prop_assert!(close(a[k], b[k], 1e-10), "param {k}: {} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn baseline_shift_equivariant(seed in 0u64..1000, c in -3.0f64..3.0) {
        let t = trace(&truth(0.0), 20.0, seed);
        let guess = initial_guess(&t, 4).unwrap();
        let base = fit_spectrum(&t, &guess).unwrap();
        let shifted: Vec<f64> = t.values().iter().map(|v| v + c).collect();
        let g2 = SpectrumModel { baseline: guess.baseline + c, ..guess.clone() };
        let moved = fit_points(t.freqs(), &shifted, &g2).unwrap();
        prop_assert!(close(moved.model.baseline, base.model.baseline + c, 1e-8));
        for k in 0..4 {
            prop_assert!(close(moved.model.centers[k], base.model.centers[k], 1e-8));
            prop_assert!(close(moved.model.amplitudes[k], base.model.amplitudes[k], 1e-8));
        }
        prop_assert!(close(moved.model.fwhm, base.model.fwhm, 1e-8));
    }

    #[test]
    fn amplitude_scale_equivariant(seed in 0u64..1000, s in 0.01f64..100.0) {
        let t = trace(&truth(0.0), 20.0, seed);
        let guess = initial_guess(&t, 4).unwrap();
        let base = fit_spectrum(&t, &guess).unwrap();
        let scaled: Vec<f64> = t.values().iter().map(|v| v * s).collect();
        let g2 = SpectrumModel {
            amplitudes: guess.amplitudes.iter().map(|a| a * s).collect(),
            baseline: guess.baseline * s,
            ..guess.clone()
        };
        let sc = fit_points(t.freqs(), &scaled, &g2).unwrap();
        for k in 0..4 {
            prop_assert!(close(sc.model.centers[k], base.model.centers[k], 1e-8));
            prop_assert!(close(sc.model.amplitudes[k], s * base.model.amplitudes[k], 1e-8));
        }
        prop_assert!(close(sc.model.fwhm, base.model.fwhm, 1e-8));
        prop_assert!((sc.model.baseline - s * base.model.baseline).abs() <= 1e-8 * s);
    }
}

#[test]
fn reported_sigma_matches_scatter() {
    // SNR 10: the scatter of fitted centers should match the reported 1σ
    let model = truth(0.0);
    let n = 200;
    let mut dev = vec![Vec::new(); 4];
    let mut reported = [0.0; 4];
    for seed in 0..n {
        let t = trace(&model, 10.0, 1000 + seed);
        let fit = fit_spectrum(&t, &initial_guess(&t, 4).unwrap()).unwrap();
        assert!(fit.converged);
        let u = fit.uncertainty.unwrap();
        for k in 0..4 {
            dev[k].push(fit.model.centers[k] - model.centers[k]);
            reported[k] += u.centers[k] / n as f64;
        }
    }
    for k in 0..4 {
        let rms = (dev[k].iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
        let ratio = rms / reported[k];
        assert!((1.0 / 1.5..=1.5).contains(&ratio), "line {k}: scatter {rms} vs reported {}", reported[k]);
    }
}

#[test]
fn pure_noise_is_rejected() {
    let flat = SpectrumModel::new(vec![4000.0], vec![0.0], 10.0, 0.0).unwrap();
    let freqs: Vec<f64> = (0..164).map(|i| 3900.0 + i as f64).collect();
    let t = synthesize(&flat, &freqs, 0.05, 3).unwrap();
    assert!(matches!(initial_guess(&t, 4), Err(nvmag::Error::FeatureCount { .. })));
}

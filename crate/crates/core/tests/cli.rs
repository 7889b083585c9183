//! The `nvmag` binary: output shape and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn nvmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmag")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn sweep_along_hundred_has_coinciding_axes() {
    let o = nvmag(&["sweep", "--direction", "100", "--steps", "30"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sweep_value,axis,transition,freq_MHz,strength"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 31 * 4 * 3);
    // rows per magnitude: 4 axes × 3 transitions, axis-major
    for block in rows.chunks(12) {
        for k in 1..4 {
            for t in 0..3 {
                let (a, b) = (&block[t], &block[3 * k + t]);
                assert_eq!(a[2], b[2]);
                let (fa, fb): (f64, f64) = (a[3].parse().unwrap(), b[3].parse().unwrap());
                assert!((fa - fb).abs() < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn synth_map_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let o = nvmag(&["synth", "--out", &s(d), "--y-extent-mm", "6", "--z-extent-mm", "4", "--curvature", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("truth.csv").exists());

    let map_dir = d.join("map");
    let o = nvmag(&["map", "--in", &s(&d.join("scans")), "--out", &s(&map_dir), "--raster"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("failed=0"));
    assert!(map_dir.join("field_map.csv").exists());
    assert!(map_dir.join("B_mT.pgm").exists());

    let o = nvmag(&["stats", "--map", &s(&map_dir), "--region", "-1,10,-1,10"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "n"), 25.0);
    for (key, truth) in [("B_mT", 104.5), ("theta_deg", 35.46), ("phi_deg", -2.43)] {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        let (mean, se) = (field(line, key), field(line, "se"));
        assert!((mean - truth).abs() <= 4.0 * se, "{line}");
    }
}

#[test]
fn invert_recovers_halbach_point() {
    let o = nvmag(&[
        "invert",
        "--freqs",
        "4043.5561,4252.2637,4609.4599,4648.0677",
        "--sigmas",
        "0.01,0.01,0.01,0.01",
        "--assignment",
        "1:dq,4:dq,3:minus,2:minus",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!((field(&text, "B_mT") - 104.5).abs() < 1e-3);
    assert!((field(&text, "theta_deg") - 35.46).abs() < 1e-3);
    assert!((field(&text, "phi_deg") + 2.43).abs() < 1e-3);
    assert!(text.contains("unique=true"));
}

#[test]
fn exit_codes() {
    assert_eq!(nvmag(&["--help"]).status.code(), Some(0));
    assert_eq!(nvmag(&["bogus"]).status.code(), Some(2));
    assert_eq!(nvmag(&["invert"]).status.code(), Some(2));
    assert_eq!(nvmag(&["stats", "--map", "x", "--region", "1,2"]).status.code(), Some(2));
    let o = nvmag(&["map", "--in", "/nonexistent/scan", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn asd_of_white_noise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ts.csv");
    let fs = 1000.0;
    let sigma = 1e-9;
    let ts = nvmag::noise::TimeSeries::new(fs, {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = rand_distr::Normal::new(0.0, sigma).unwrap();
        (0..20_000).map(|_| n.sample(&mut rng)).collect()
    })
    .unwrap();
    nvmag::noise::write_time_series(&path, &ts, "T").unwrap();
    let o = nvmag(&["asd", "--in", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let level = sigma * (2.0 / fs).sqrt();
    let got = field(&stdout(&o), "density");
    assert!((got / level - 1.0).abs() < 0.05, "{got} vs {level}");
}

//! Spin model against an independent eigenvalue oracle, plus symmetry and
//! selection-rule properties.

use nvmag::crystal::{nv_axes, spherical_to_cartesian, SphericalField, Vec3};
use nvmag::spinmodel::*;
use proptest::prelude::*;

/// Number of eigenvalues of the symmetric tridiagonal matrix (d, e) below x.
fn sturm_count(d: &[f64; 3], e: &[f64; 2], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    for i in 0..3 {
        if i > 0 {
            let denom = if q == 0.0 { 1e-300 } else { q };
            q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Energies by bisection on the Sturm count; H is tridiagonal in the
/// |+1⟩, |0⟩, |−1⟩ basis with off-diagonal γB⊥/√2.
fn oracle_levels(p: &SpinModelParams, b_par: f64, b_perp: f64) -> [f64; 3] {
    let d = [p.d_zfs + p.gamma * b_par, 0.0, p.d_zfs - p.gamma * b_par];
    let t = p.gamma * b_perp / 2f64.sqrt();
    let e = [t, t];
    let r = d.iter().map(|v| v.abs()).sum::<f64>() + 2.0 * t.abs() + 1.0;
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let (mut lo, mut hi) = (-r, r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(&d, &e, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        *slot = 0.5 * (lo + hi);
    }
    out
}

fn oracle_lines(p: &SpinModelParams, b_par: f64, b_perp: f64) -> [f64; 3] {
    let e = oracle_levels(p, b_par, b_perp);
    let mut l = [e[1] - e[0], e[2] - e[0], e[2] - e[1]];
    l.sort_by(f64::total_cmp);
    l
}

fn model_lines(t: &AxisTransitions) -> [f64; 3] {
    let mut l = [t.f_minus.abs(), t.f_plus.abs(), t.f_dq.abs()];
    l.sort_by(f64::total_cmp);
    l
}

fn assert_rows_equal(a: &AxisTransitions, b: &AxisTransitions, tol: f64) {
    for t in Transition::ALL {
        assert!((a.frequency(t) - b.frequency(t)).abs() < tol, "{t}: {a:?} vs {b:?}");
        assert!((a.strength(t) - b.strength(t)).abs() < 1e-9, "{t} strength");
    }
}

proptest! {
    #[test]
    fn eigenlevels_match_bisection(b_par in -200.0f64..200.0, b_perp in 0.0f64..200.0) {
        let p = SpinModelParams::default();
        let proj = AxisProjection::from_components(b_par, b_perp);
        let lv = eigenlevels(&hamiltonian_matrix(&p, &proj)).unwrap();
        let mut e = lv.energies;
        e.sort_by(f64::total_cmp);
        let o = oracle_levels(&p, b_par, b_perp);
        for k in 0..3 {
            prop_assert!((e[k] - o[k]).abs() < 1e-8, "{e:?} vs {o:?}");
        }
        prop_assert!((e.iter().sum::<f64>() - 2.0 * p.d_zfs).abs() < 1e-9);
    }

    #[test]
    fn transition_lines_match_bisection(
        x in -150.0f64..150.0, y in -150.0f64..150.0, z in -150.0f64..150.0,
    ) {
        let p = SpinModelParams::default();
        let b = Vec3::new(x, y, z);
        let table = transition_frequencies(&p, &b);
        for (row, axis) in table.axes.iter().zip(nv_axes().iter()) {
            let proj = AxisProjection::from_field(axis, &b);
            let o = oracle_lines(&p, proj.b_parallel, proj.b_perp);
            let m = model_lines(row);
            for k in 0..3 {
                prop_assert!((m[k] - o[k]).abs() < 1e-8 * o[k].max(1.0), "{m:?} vs {o:?}");
            }
            prop_assert!((row.f_dq - (row.f_plus - row.f_minus)).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_is_consistent(x in -150.0f64..150.0, y in -150.0f64..150.0, z in -150.0f64..150.0) {
        let b = Vec3::new(x, y, z);
        for axis in nv_axes().iter() {
            let pr = AxisProjection::from_field(axis, &b);
            let beta = pr.beta_deg.to_radians();
            prop_assert!((pr.omega * beta.cos() - pr.b_parallel).abs() <= 1e-9 * pr.omega.max(1e-12));
            prop_assert!((pr.omega * beta.sin() - pr.b_perp).abs() <= 1e-9 * pr.omega.max(1e-12));
        }
    }

    #[test]
    fn selection_rule(b_par in -150.0f64..150.0, b_perp in 0.0f64..150.0) {
        let p = SpinModelParams::default();
        let (_, _, s_dq) = transition_strength(&p, &AxisProjection::from_components(b_par, b_perp));
        prop_assert_eq!(transition_strength(&p, &AxisProjection::from_components(b_par, 0.0)).2, 0.0);
        if b_perp > 1e-3 {
            prop_assert!(s_dq > 1e-12);
        }
    }

    #[test]
    fn phi_half_turn_swaps_axis_pairs(theta in -89.0f64..89.0, phi in -180.0f64..180.0, b in 1.0f64..150.0) {
        let p = SpinModelParams::default();
        let t = |ph: f64| transition_frequencies(&p, &spherical_to_cartesian(&SphericalField { b_m: b, theta_deg: theta, phi_deg: ph }));
        let (a, c) = (t(phi), t(phi + 180.0));
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            assert_rows_equal(&a.axes[i], &c.axes[j], 1e-8);
        }
        let m = t(-phi);
        for (i, j) in [(0, 3), (3, 0), (1, 2), (2, 1)] {
            assert_rows_equal(&a.axes[i], &m.axes[j], 1e-8);
        }
    }
}

#[test]
fn bias_field_along_axis_one() {
    // 1.07 mT along axis 1: exact axial lines at D ± 29.99 MHz
    let p = SpinModelParams::default();
    let b = nv_axes().axis(1).unwrap() * 1.07;
    let row = transition_frequencies(&p, &b).axes[0];
    assert!((row.f_plus - (p.d_zfs + 29.98568)).abs() < 1e-9);
    assert!((row.f_minus - (p.d_zfs - 29.98568)).abs() < 1e-9);
    assert_eq!(row.s_dq, 0.0);
}

#[test]
fn hundred_direction_rows_coincide() {
    let p = SpinModelParams::default();
    let mags: Vec<f64> = (0..=150).map(f64::from).collect();
    let sw = sweep_vs_field(&p, &Vec3::new(1.0, 0.0, 0.0), &mags).unwrap();
    for t in &sw.tables {
        for k in 1..4 {
            assert_rows_equal(&t.axes[0], &t.axes[k], 1e-9);
        }
    }
    let first = &sw.tables[0].axes[0];
    assert_eq!((first.f_minus, first.f_plus, first.f_dq), (p.d_zfs, p.d_zfs, 0.0));
}

#[test]
fn hundred_eleven_direction() {
    let p = SpinModelParams::default();
    let mags: Vec<f64> = (0..=150).map(f64::from).collect();
    let sw = sweep_vs_field(&p, &Vec3::new(1.0, 1.0, 1.0), &mags).unwrap();
    for t in &sw.tables {
        assert_eq!(t.axes[0].s_dq, 0.0);
        assert_rows_equal(&t.axes[1], &t.axes[2], 1e-9);
        assert_rows_equal(&t.axes[1], &t.axes[3], 1e-9);
    }
    // f_plus rises monotonically along the axis
    for w in sw.tables.windows(2) {
        assert!(w[1].axes[0].f_plus > w[0].axes[0].f_plus);
    }
}

#[test]
fn angle_sweep_matches_pointwise_evaluation() {
    let p = SpinModelParams::default();
    let angles: Vec<f64> = (-180..=180).step_by(5).map(f64::from).collect();
    let sw = sweep_vs_angle(&p, 104.5, AngleSweep::Phi { theta_deg: 35.46 }, &angles).unwrap();
    for (a, t) in angles.iter().zip(&sw.tables) {
        let b = spherical_to_cartesian(&SphericalField { b_m: 104.5, theta_deg: 35.46, phi_deg: *a });
        let direct = transition_frequencies(&p, &b);
        for k in 0..4 {
            assert_rows_equal(&t.axes[k], &direct.axes[k], 1e-9);
        }
    }
    let thetas: Vec<f64> = (-90..=90).step_by(5).map(f64::from).collect();
    let flat = sweep_vs_angle(&p, 0.0, AngleSweep::Theta { phi_deg: 0.0 }, &thetas).unwrap();
    assert!(flat.tables.iter().all(|t| t.axes.iter().all(|r| r.f_plus == p.d_zfs)));
}

/// d f_plus / d|B| against γ·cos β along a fixed direction.
fn slope_deviation(p: &SpinModelParams, beta_deg: f64, b: f64) -> f64 {
    let axis = nv_axes().axis(1).copied().unwrap();
    // a unit vector at β from axis 1
    let perp = axis.cross(&Vec3::new(0.0, 0.0, 1.0)).normalize();
    let dir = axis * beta_deg.to_radians().cos() + perp * beta_deg.to_radians().sin();
    let h = 1e-4;
    let f = |m: f64| transition_frequencies(p, &(dir * m)).axes[0].f_plus;
    let slope = (f(b + h) - f(b - h)) / (2.0 * h);
    slope - p.gamma * beta_deg.to_radians().cos()
}

#[test]
fn effective_gamma_is_nonlinear_off_axis() {
    let p = SpinModelParams::default();
    let big = slope_deviation(&p, 30.0, 100.0).abs();
    let mid = slope_deviation(&p, 10.0, 100.0).abs();
    let small = slope_deviation(&p, 1.0, 100.0).abs();
    assert!(big > 0.05 * p.gamma, "{big}");
    assert!(big > mid && mid > small);
    assert!(slope_deviation(&p, 0.0, 100.0).abs() < 1e-6);
}

#[test]
fn halbach_drive_strengths() {
    let p = SpinModelParams::default();
    let b = spherical_to_cartesian(&SphericalField { b_m: 104.5, theta_deg: 35.46, phi_deg: -2.43 });
    let t = transition_frequencies(&p, &b);
    for (row, axis) in t.axes.iter().zip(nv_axes().iter()) {
        if AxisProjection::from_field(axis, &b).b_perp > 0.0 {
            assert!(row.s_dq > 0.0);
        }
    }
}

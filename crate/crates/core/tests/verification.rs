use bomber_core::verify::{boundary_detect, limit_probes, LimitProbe};
use bomber_core::{
    boundary_f, boundary_f_inverse, check_interior_derivative_positive, check_monotone_k_in_x,
    check_u_zero_limit, closed_form_p, residual_check, run_verification, solve_integral_equation,
    GridSpec, ModelParams, QuadratureConfig, Scheme, State, VerifyOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(u: f64) -> ModelParams {
    ModelParams::new(u).unwrap()
}

#[test]
fn closed_form_residual_on_spend_all_states() {
    let q = QuadratureConfig::default();
    for &u in &[0.0, 0.3, 0.5, 0.8] {
        let p = params(u);
        for k in 1..=10 {
            let t = 0.4 * k as f64;
            let s = State::new(0.7 * boundary_f(t, &p).unwrap(), t).unwrap();
            let r = residual_check(|z| closed_form_p(z, &p, &q), s, &p, &q).unwrap();
            assert!(r.residual <= 1e-6, "u={u}: {r:?}");
            assert_eq!(r.residual, (r.lhs - r.rhs).abs());
        }
    }
}

#[test]
fn residual_detects_shifted_candidate() {
    let q = QuadratureConfig::default();
    let p = params(0.3);
    for &(x, t) in &[(0.2, 0.2), (0.5, 0.4), (1.0, 0.5)] {
        let s = State::new(x, t).unwrap();
        let r = residual_check(|z| closed_form_p(z, &p, &q).map(|v| v + 0.01), s, &p, &q).unwrap();
        assert!(r.residual >= 5e-3, "{r:?}");
    }
}

#[test]
fn boundary_detection_examples() {
    let p = params(0.0);
    let spec = GridSpec::new(2.0, 5.0, 401, 201, Scheme::Rk4).unwrap();
    let g = solve_integral_equation(&p, &spec).unwrap();
    let dx = spec.dx();
    let e = boundary_detect(&g, 1.0, 0.5 * dx).unwrap();
    assert!(
        (e.x_detected - std::f64::consts::LN_2).abs() <= 2.0 * dx,
        "{e:?}"
    );
    assert_eq!(e.gap, (e.x_detected - e.x_analytic).abs());
    // Early on the whole column spends everything.
    let early = boundary_detect(&g, 0.025, 0.5 * dx).unwrap();
    assert!(early.x_analytic > spec.x_max);
    assert_eq!(early.x_detected, spec.x_max);

    let late = solve_integral_equation(
        &params(0.6),
        &GridSpec::new(0.5, 80.0, 51, 801, Scheme::Rk4).unwrap(),
    )
    .unwrap();
    let e = boundary_detect(&late, 80.0, 0.1 * late.spec().dx()).unwrap();
    assert_eq!(e.x_detected, 0.0);
}

#[test]
fn derivative_scan_is_step_insensitive() {
    let q = QuadratureConfig::default();
    for &u in &[0.0, 0.3, 0.7] {
        let p = params(u);
        for &t in &[0.5, 1.5, 3.0] {
            let x = 1.6 * boundary_f(t, &p).unwrap();
            let s_lo = boundary_f_inverse(x, &p).unwrap();
            let r = check_interior_derivative_positive(x, 0.5 * (s_lo + t), &p, 50, &q).unwrap();
            assert!(r.passed && r.n_checked == 50, "{r:?}");
            assert!(r.max_step_sensitivity < 0.1, "{r:?}");
        }
    }
}

#[test]
fn monotonicity_scans() {
    let p = params(0.5);
    let g = solve_integral_equation(&p, &GridSpec::new(3.0, 3.0, 121, 121, Scheme::Rk4).unwrap())
        .unwrap();
    let ts = [0.5, 1.0, 2.0, 3.0];
    let r = check_monotone_k_in_x(&p, &ts, 1000, Some(&g)).unwrap();
    assert!(r.closed_form_increasing);
    assert_eq!(r.numeric.len(), ts.len());
    assert!(check_monotone_k_in_x(&p, &ts, 1, None).is_err());
}

#[test]
fn u_zero_limit_examples() {
    let q = QuadratureConfig::default();
    let boundary: Vec<LimitProbe> = (1..=100)
        .map(|k| LimitProbe::BoundaryF { t: 0.1 * k as f64 })
        .collect();
    assert!(check_u_zero_limit(&boundary, 1e-8, &q).unwrap() <= 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let probes = limit_probes(&mut rng, 30).unwrap();
    assert!(check_u_zero_limit(&probes, 1e-8, &q).unwrap() <= 1e-6);
    assert!(check_u_zero_limit(&probes, 0.0, &q).is_err());
}

#[test]
fn quick_report_passes_and_serializes() {
    let opts = VerifyOptions::new(true, 3);
    assert_eq!((opts.grid.nx, opts.grid.nt), (401, 401));
    let report = run_verification(&params(0.3), &opts).unwrap();
    assert!(report.passed, "{report}");
    let json = serde_json::to_string(&report).unwrap();
    let back: bomber_core::VerificationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.checks.len(), report.checks.len());
}

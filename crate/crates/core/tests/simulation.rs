use std::sync::Arc;

use bomber_core::montecarlo::run_rng;
use bomber_core::{
    boundary_f, closed_form_p, estimate_survival, simulate_mission, solve_integral_equation,
    GridSpec, ModelParams, Policy, QuadratureConfig, Scheme, SimConfig, SimResult, State,
};

fn params(u: f64) -> ModelParams {
    ModelParams::new(u).unwrap()
}

fn within(r: &SimResult, exact: f64, sigmas: f64) -> bool {
    (r.p_hat - exact).abs() <= sigmas * r.stderr
}

#[test]
fn closed_form_policy_reproduces_spend_all_region_value() {
    let p = params(0.3);
    let s = State::new(0.4, 2.0).unwrap();
    let exact = closed_form_p(s, &p, &QuadratureConfig::default()).unwrap();
    let r = estimate_survival(
        &Policy::closed_form(),
        s,
        &p,
        &SimConfig::new(200_000, 2024, 8).unwrap(),
    )
    .unwrap();
    assert!(within(&r, exact, 4.0), "{r:?} vs {exact}");
    assert!((r.stderr - (r.p_hat * (1.0 - r.p_hat) / 200_000.0).sqrt()).abs() < 1e-15);
}

#[test]
fn empty_magazine_survival_law() {
    for &u in &[0.0, 0.5] {
        let p = params(u);
        for &t in &[0.5, 2.0] {
            let s = State::new(0.0, t).unwrap();
            let r = estimate_survival(
                &Policy::SpendAll,
                s,
                &p,
                &SimConfig::new(100_000, 3, 4).unwrap(),
            )
            .unwrap();
            assert!(
                within(&r, (-(1.0 - u) * t).exp(), 4.0),
                "u={u} t={t}: {r:?}"
            );
        }
    }
}

#[test]
fn spend_all_is_no_better_than_the_optimum_far_outside() {
    let p = params(0.3);
    let t = 1.5;
    let s = State::new(3.0 * boundary_f(t, &p).unwrap(), t).unwrap();
    let spec = GridSpec::new(2.0, 2.0, 201, 201, Scheme::Rk4).unwrap();
    let grid = Arc::new(solve_integral_equation(&p, &spec).unwrap());
    let cfg = SimConfig::new(100_000, 77, 8).unwrap();
    let optimal = estimate_survival(&Policy::GridInterpolated(grid.clone()), s, &p, &cfg).unwrap();
    let greedy = estimate_survival(&Policy::SpendAll, s, &p, &cfg).unwrap();
    assert!(greedy.p_hat <= optimal.p_hat + 4.0 * optimal.stderr.max(greedy.stderr));
    assert!(
        within(&optimal, grid.numeric_p(s).unwrap(), 4.0),
        "{optimal:?}"
    );
    // The closed-form policy with a grid fallback plays the same game.
    let hybrid = Policy::ClosedForm {
        fallback: Some(grid),
    };
    let r = estimate_survival(&hybrid, s, &p, &cfg).unwrap();
    assert!((r.p_hat - optimal.p_hat).abs() <= 4.0 * r.stderr);
}

#[test]
fn single_run_is_reproducible() {
    let p = params(0.5);
    let s = State::new(1.0, 3.0).unwrap();
    let cfg = SimConfig::new(1, 99, 1).unwrap();
    let first = estimate_survival(&Policy::SpendAll, s, &p, &cfg).unwrap();
    for _ in 0..5 {
        assert_eq!(
            estimate_survival(&Policy::SpendAll, s, &p, &cfg).unwrap(),
            first
        );
    }
    assert!(first.p_hat == 0.0 || first.p_hat == 1.0);
    let mut rng = run_rng(99, 0, 0);
    let survived = simulate_mission(&Policy::SpendAll, s, &p, &mut rng).unwrap();
    assert_eq!(survived, first.p_hat == 1.0);
}

#[test]
fn counts_do_not_depend_on_worker_count() {
    let p = params(0.3);
    let s = State::new(0.5, 1.0).unwrap();
    let cfg = SimConfig::new(30_001, 5, 7).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_survival(&Policy::closed_form(), s, &p, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
    assert_eq!(one.n_runs, 30_001);
}

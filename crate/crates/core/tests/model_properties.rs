use bomber_core::model::{p_band_branch, p_spend_all_branch};
use bomber_core::{
    boundary_f, boundary_f_inverse, classify_region, closed_form_k, closed_form_p, survival_kernel,
    ModelParams, QuadratureConfig, Region, State,
};
use proptest::prelude::*;

fn params(u: f64) -> ModelParams {
    ModelParams::new(u).unwrap()
}

fn any_u() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0..0.99_f64]
}

#[test]
fn kernel_is_increasing_concave_and_bounded() {
    for &u in &[0.0, 0.3, 0.5, 0.8, 0.999] {
        let p = params(u);
        let ys: Vec<f64> = (0..1000).map(|k| 0.02 * k as f64).collect();
        let a: Vec<f64> = ys
            .iter()
            .map(|&y| survival_kernel(y, &p).unwrap())
            .collect();
        assert!((a[0] - u).abs() <= 1e-15);
        for w in a.windows(2) {
            assert!(w[1] > w[0], "u={u}: {w:?}");
        }
        for w in a.windows(3) {
            // Second difference of a concave function is nonpositive.
            assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-15, "u={u}: {w:?}");
        }
        assert!(a.iter().all(|&v| v >= a[0] && v < 1.0));
    }
}

#[test]
fn boundary_round_trip_over_long_horizon() {
    for &u in &[0.0, 1e-9, 0.3, 0.5, 0.8, 0.99] {
        let p = params(u);
        let mut prev = f64::INFINITY;
        for k in 0..=5000 {
            let t = 1e-3 * (50.0_f64 / 1e-3).powf(k as f64 / 5000.0);
            let f = boundary_f(t, &p).unwrap();
            assert!(f < prev, "u={u} t={t}");
            prev = f;
            let back = boundary_f_inverse(f, &p).unwrap();
            assert!(
                (back - t).abs() <= 1e-10 * t.max(1.0),
                "u={u} t={t} back={back}"
            );
        }
    }
}

#[test]
fn k_continuous_across_spend_all_boundary() {
    for &u in &[0.0, 0.3, 0.7] {
        let p = params(u);
        for &t in &[0.3, 1.0, 4.0] {
            let f = boundary_f(t, &p).unwrap();
            let mut last = f64::INFINITY;
            for e in 2..=12 {
                let eps = 10f64.powi(-e);
                let lo = closed_form_k(State::new(f - eps, t).unwrap(), &p).unwrap();
                let hi = closed_form_k(State::new(f + eps, t).unwrap(), &p).unwrap();
                let jump = (hi - lo).abs();
                assert!(jump <= 2.0 * eps + 1e-15, "u={u} t={t} eps={eps}: {jump}");
                assert!(jump <= last);
                last = jump;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn regions_partition_and_are_ordered_in_x(
        u in any_u(),
        t in 1e-3..20.0_f64,
        x1 in 0.0..10.0_f64,
        x2 in 0.0..10.0_f64,
    ) {
        let p = params(u);
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let rank = |r: Region| match r {
            Region::R1 => 0,
            Region::R2 => 1,
            Region::Outside => 2,
        };
        let r_lo = classify_region(State::new(lo, t).unwrap(), &p).unwrap();
        let r_hi = classify_region(State::new(hi, t).unwrap(), &p).unwrap();
        prop_assert!(rank(r_lo) <= rank(r_hi));
        let f = boundary_f(t, &p).unwrap();
        let expected = if hi <= f { Region::R1 } else if hi <= 2.0 * f { Region::R2 } else { Region::Outside };
        prop_assert_eq!(r_hi, expected);
    }

    #[test]
    fn k_and_p_are_sane_on_closed_form_regions(
        u in any_u(),
        t in 1e-3..10.0_f64,
        frac in 0.0..=2.0_f64,
        dfrac in 0.0..0.5_f64,
    ) {
        let p = params(u);
        let q = QuadratureConfig::default();
        let f = boundary_f(t, &p).unwrap();
        let s = State::new(frac * f, t).unwrap();
        let region = classify_region(s, &p).unwrap();
        let k = closed_form_k(s, &p).unwrap();
        prop_assert!(k <= s.x);
        prop_assert_eq!(k == s.x, region == Region::R1);
        if region == Region::R2 {
            prop_assert!((k - 0.5 * (s.x + f)).abs() <= 1e-12 * s.x.max(1.0));
        }
        let prob = closed_form_p(s, &p, &q).unwrap();
        prop_assert!(prob > 0.0 && prob <= 1.0);

        // More ammunition never lowers survival.
        let more = State::new((frac + dfrac).min(2.0) * f, t).unwrap();
        let prob_more = closed_form_p(more, &p, &q).unwrap();
        prop_assert!(prob_more >= prob - 1e-12);
    }

    #[test]
    fn more_time_to_go_never_helps(u in any_u(), t in 0.05..5.0_f64, dt in 0.0..2.0_f64, frac in 0.0..1.0_f64) {
        // Stay inside R1 at the later time so both states have closed forms.
        let p = params(u);
        let q = QuadratureConfig::default();
        let x = frac * boundary_f(t + dt, &p).unwrap();
        let early = closed_form_p(State::new(x, t).unwrap(), &p, &q).unwrap();
        let late = closed_form_p(State::new(x, t + dt).unwrap(), &p, &q).unwrap();
        prop_assert!(late <= early + 1e-12);
    }

    #[test]
    fn branches_agree_on_the_boundary(u in any_u(), t in 1e-2..10.0_f64) {
        let p = params(u);
        let q = QuadratureConfig::default();
        let on = State::new(boundary_f(t, &p).unwrap(), t).unwrap();
        let d = (p_spend_all_branch(on, &p) - p_band_branch(on, &p, &q).unwrap()).abs();
        prop_assert!(d <= 1e-8, "{}", d);
    }
}

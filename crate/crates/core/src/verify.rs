//! Mechanical checks tying the closed forms, the grid solver and the
//! simulator together.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BomberError, Result};
use crate::model::{
    boundary_f, boundary_f_inverse, classify_region, closed_form_k, closed_form_p, g1,
    p_band_branch, p_spend_all_branch, q2, q_integrand, unimodal_argmax, ModelParams, Region,
    State,
};
use crate::montecarlo::{estimate_survival, Policy, SimConfig};
use crate::optimize::scan_then_golden_max;
use crate::quadrature::{integrate_with_breakpoints, QuadratureConfig};
use crate::solver::{solve_integral_equation, GridSpec, SolutionGrid};

/// Both sides of the integral equation at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub state: State,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluates `P(x, t)` and the right-hand side
/// `e^{-t} (1 + ∫_0^t max_y a(y) P(x - y, s) e^s ds)` for the candidate `p_fn`.
///
/// The outer integral is split where `(x, s)` crosses the spend-it-all
/// boundary. `p_fn` is only queried at `(x - y, s)` with `0 <= y <= x` and
/// `0 <= s <= t`.
pub fn residual_check<F>(
    p_fn: F,
    s: State,
    params: &ModelParams,
    quad: &QuadratureConfig,
) -> Result<ResidualReport>
where
    F: Fn(State) -> Result<f64>,
{
    s.validate()?;
    let lhs = p_fn(s)?;
    let rhs = if s.t == 0.0 {
        1.0
    } else {
        let mut points = vec![0.0];
        if s.x > 0.0 {
            let cross = boundary_f_inverse(s.x, params)?;
            if cross > 0.0 && cross < s.t {
                points.push(cross);
            }
        }
        points.push(s.t);
        let integrand = |r: f64| -> Result<f64> {
            let r = r.clamp(0.0, s.t);
            let (_, best) = max_over_allocation(&p_fn, s.x, r, params)?;
            Ok(r.exp() * best)
        };
        let integral = integrate_with_breakpoints(integrand, &points, quad)?;
        (-s.t).exp() * (1.0 + integral.value)
    };
    Ok(ResidualReport {
        state: s,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `max_{0<=y<=x} a(y) P(x - y, s)` with a 64-cell scan and golden refinement.
fn max_over_allocation<F>(p_fn: &F, x: f64, s: f64, params: &ModelParams) -> Result<(f64, f64)>
where
    F: Fn(State) -> Result<f64>,
{
    let mut failure = None;
    let mut objective = |y: f64| {
        let z = (x - y).max(0.0);
        match p_fn(State { x: z, t: s }) {
            Ok(p) => params.kernel(y) * p,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let best = if x == 0.0 {
        (0.0, objective(0.0))
    } else {
        scan_then_golden_max(&mut objective, 0.0, x, 64, 1e-10)
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// Detected versus analytic spend-it-all boundary at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub t: f64,
    pub x_detected: f64,
    pub x_analytic: f64,
    pub gap: f64,
}

/// Largest grid `x` whose numeric allocation is within `tol` of `x` at time
/// `t`, found by bisection on the grid's x nodes. The spend-it-all set is an
/// interval starting at `x = 0`, so the predicate holds on a prefix.
pub fn boundary_detect(grid: &SolutionGrid, t: f64, tol: f64) -> Result<BoundaryEstimate> {
    let spec = grid.spec();
    if !(t > 0.0 && t <= spec.t_max) {
        return Err(BomberError::domain(format!(
            "boundary detection needs t in (0, {}], got {t}",
            spec.t_max
        )));
    }
    let spends_all = |i: usize| -> Result<bool> {
        let x = grid.x(i);
        Ok(x - grid.numeric_k(State { x, t })? <= tol)
    };
    let last = spec.nx - 1;
    let idx = if spends_all(last)? {
        last
    } else {
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if spends_all(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let x_detected = grid.x(idx);
    let x_analytic = boundary_f(t, grid.params())?;
    Ok(BoundaryEstimate {
        t,
        x_detected,
        x_analytic,
        gap: (x_detected - x_analytic).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub x: f64,
    pub s: f64,
    /// Right end `x - f_u(s)` of the sampled allocation interval.
    pub y_max: f64,
    pub n_checked: usize,
    pub min_derivative: f64,
    /// Largest relative change of an estimate when the step is halved.
    pub max_step_sensitivity: f64,
    pub passed: bool,
}

/// Positivity tolerance for finite-difference derivative estimates.
pub const DERIVATIVE_TOLERANCE: f64 = -1e-8;

/// Samples `G2(y, s) = a(y) Q2(x - y, s)` at `n_samples` equally spaced points
/// of `[0, x - f_u(s)]`, both ends included, and checks that its derivative in
/// `y` is positive. Central differences with step `1e-5 max(1, |y|)` are used,
/// switching to second-order backward differences where the forward point
/// would leave the interval.
///
/// `(x, s)` must satisfy `x <= 2 f_u(s)`; if `x <= f_u(s)` the interval is
/// empty and the check passes vacuously.
pub fn check_interior_derivative_positive(
    x: f64,
    s: f64,
    params: &ModelParams,
    n_samples: usize,
    quad: &QuadratureConfig,
) -> Result<DerivativeReport> {
    let f = boundary_f(s, params)?;
    if !(x > 0.0) || x > 2.0 * f * (1.0 + 1e-12) {
        return Err(BomberError::domain(format!(
            "derivative check needs 0 < x <= 2 f_u(s) = {}, got x = {x}",
            2.0 * f
        )));
    }
    let y_max = (x - f).max(0.0);
    if y_max == 0.0 || n_samples == 0 {
        return Ok(DerivativeReport {
            x,
            s,
            y_max,
            n_checked: 0,
            min_derivative: f64::INFINITY,
            max_step_sensitivity: 0.0,
            passed: true,
        });
    }

    let g2 = |y: f64| -> Result<f64> { Ok(params.kernel(y) * q2(x - y, s, params, quad)?) };
    let derivative = |y: f64, h: f64| -> Result<f64> {
        if y + h <= y_max {
            Ok((g2(y + h)? - g2(y - h)?) / (2.0 * h))
        } else {
            Ok((3.0 * g2(y)? - 4.0 * g2(y - h)? + g2(y - 2.0 * h)?) / (2.0 * h))
        }
    };

    let mut min_derivative = f64::INFINITY;
    let mut max_step_sensitivity: f64 = 0.0;
    for k in 0..n_samples {
        let y = if n_samples == 1 {
            y_max
        } else {
            y_max * k as f64 / (n_samples - 1) as f64
        };
        let h = 1e-5 * y.abs().max(1.0);
        let d = derivative(y, h)?;
        let d_half = derivative(y, 0.5 * h)?;
        min_derivative = min_derivative.min(d);
        let rel = (d - d_half).abs() / d.abs().max(f64::MIN_POSITIVE);
        max_step_sensitivity = max_step_sensitivity.max(rel);
    }
    Ok(DerivativeReport {
        x,
        s,
        y_max,
        n_checked: n_samples,
        min_derivative,
        max_step_sensitivity,
        passed: min_derivative > DERIVATIVE_TOLERANCE,
    })
}

/// Monotonicity scan of the numeric allocation along one grid column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericMonotoneScan {
    pub t: f64,
    pub decreases: usize,
    pub decreases_outside: usize,
    pub max_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub closed_form_increasing: bool,
    pub n_pairs: usize,
    pub min_slope_r1: f64,
    pub min_slope_r2: f64,
    /// Informational only; nothing is asserted about `Outside`.
    pub numeric: Vec<NumericMonotoneScan>,
}

/// Checks that the closed-form allocation strictly increases along `n_x`
/// equally spaced points of `[0, 2 f_u(t)]` at each sampled `t`, and, when a
/// grid is supplied, scans its allocation columns for decreases.
pub fn check_monotone_k_in_x(
    params: &ModelParams,
    t_samples: &[f64],
    n_x: usize,
    grid: Option<&SolutionGrid>,
) -> Result<MonotoneReport> {
    if n_x < 2 {
        return Err(BomberError::domain(
            "monotonicity scan needs at least two x points",
        ));
    }
    let mut increasing = true;
    let mut n_pairs = 0;
    let mut min_slope_r1 = f64::INFINITY;
    let mut min_slope_r2 = f64::INFINITY;
    for &t in t_samples {
        let top = 2.0 * boundary_f(t, params)?;
        let xs: Vec<f64> = (0..n_x)
            .map(|k| {
                if k + 1 == n_x {
                    top
                } else {
                    top * k as f64 / (n_x - 1) as f64
                }
            })
            .collect();
        let ks = xs
            .iter()
            .map(|&x| closed_form_k(State::new(x, t)?, params))
            .collect::<Result<Vec<f64>>>()?;
        for k in 1..n_x {
            n_pairs += 1;
            let slope = (ks[k] - ks[k - 1]) / (xs[k] - xs[k - 1]);
            increasing &= ks[k] > ks[k - 1];
            let lo = classify_region(State::new(xs[k - 1], t)?, params)?;
            let hi = classify_region(State::new(xs[k], t)?, params)?;
            match (lo, hi) {
                (Region::R1, Region::R1) => min_slope_r1 = min_slope_r1.min(slope),
                (Region::R2, Region::R2) => min_slope_r2 = min_slope_r2.min(slope),
                _ => {}
            }
        }
    }

    let mut numeric = Vec::new();
    if let Some(grid) = grid {
        for &t in t_samples {
            if t > grid.spec().t_max {
                continue;
            }
            let j = grid.nearest_t_index(t);
            let tj = grid.t(j);
            let column = grid.kstar_column(j);
            let mut scan = NumericMonotoneScan {
                t: tj,
                decreases: 0,
                decreases_outside: 0,
                max_decrease: 0.0,
            };
            for i in 1..column.len() {
                let drop = column[i - 1] - column[i];
                if drop > 0.0 {
                    scan.decreases += 1;
                    scan.max_decrease = scan.max_decrease.max(drop);
                    if tj > 0.0
                        && classify_region(State::new(grid.x(i), tj)?, params)? == Region::Outside
                    {
                        scan.decreases_outside += 1;
                    }
                }
            }
            numeric.push(scan);
        }
    }

    Ok(MonotoneReport {
        closed_form_increasing: increasing,
        n_pairs,
        min_slope_r1,
        min_slope_r2,
        numeric,
    })
}

/// One input to a `u`-dependent operation for the `u -> 0` limit check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitProbe {
    BoundaryF { t: f64 },
    BoundaryFInverse { x: f64 },
    ClosedFormK(State),
    ClosedFormP(State),
    G1 { y: f64, s: f64, x: f64 },
    QIntegrand { y: f64, s: f64 },
    Q2 { y: f64, s: f64 },
}

impl LimitProbe {
    fn eval(&self, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
        match *self {
            LimitProbe::BoundaryF { t } => boundary_f(t, params),
            LimitProbe::BoundaryFInverse { x } => boundary_f_inverse(x, params),
            LimitProbe::ClosedFormK(s) => closed_form_k(s, params),
            LimitProbe::ClosedFormP(s) => closed_form_p(s, params, quad),
            LimitProbe::G1 { y, s, x } => g1(y, s, x, params),
            LimitProbe::QIntegrand { y, s } => q_integrand(y, s, params),
            LimitProbe::Q2 { y, s } => q2(y, s, params, quad),
        }
    }
}

/// Largest `|op(u = eps) - op(u = 0)|` over `probes`. `eps` must lie in
/// `(0, 1e-6]`.
pub fn check_u_zero_limit(probes: &[LimitProbe], eps: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1e-6) {
        return Err(BomberError::domain(format!(
            "limit check needs eps in (0, 1e-6], got {eps}"
        )));
    }
    let small = ModelParams::new(eps)?;
    let zero = ModelParams::new(0.0)?;
    probes.iter().try_fold(0.0_f64, |worst, probe| {
        let d = (probe.eval(&small, quad)? - probe.eval(&zero, quad)?).abs();
        Ok(worst.max(d))
    })
}

/// Draws a state uniformly from `R1 ∪ R2` restricted to `t in [t_lo, t_hi]`
/// and `x <= x_cap`.
pub fn sample_closed_form_state<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ModelParams,
    t_lo: f64,
    t_hi: f64,
    x_cap: f64,
) -> Result<State> {
    let t = rng.random_range(t_lo..=t_hi);
    let top = (2.0 * boundary_f(t, params)?).min(x_cap);
    State::new(rng.random_range(0.0..=top), t)
}

/// Frozen thresholds for the verification checks.
pub mod thresholds {
    pub const RESIDUAL: f64 = 1e-6;
    pub const SOLVER_P: f64 = 1e-4;
    /// Multiple of the grid spacing allowed for allocation and boundary errors.
    pub const GRID_STEPS: f64 = 2.0;
    pub const ZERO_AMMO_LAW: f64 = 1e-12;
    pub const SPLICE_Q: f64 = 1e-10;
    pub const SPLICE_P: f64 = 1e-8;
    pub const U_LIMIT: f64 = 1e-6;
    pub const U_LIMIT_EPS: f64 = 1e-8;
    pub const MC_SIGMAS: f64 = 4.0;
    pub const BOUNDARY_TIMES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub u: f64,
    pub quick: bool,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "verification u={} ({} mode, seed {})",
            self.u,
            if self.quick { "quick" } else { "full" },
            self.seed
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {:<28} metric={:.3e} threshold={:.3e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.metric,
                c.threshold,
                c.detail
            )?;
        }
        write!(f, "overall: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub quick: bool,
    pub seed: u64,
    pub grid: GridSpec,
    pub quad: QuadratureConfig,
}

impl VerifyOptions {
    pub fn new(quick: bool, seed: u64) -> Self {
        let grid = if quick {
            GridSpec {
                nx: 401,
                nt: 401,
                ..GridSpec::default()
            }
        } else {
            GridSpec::default()
        };
        VerifyOptions {
            quick,
            seed,
            grid,
            quad: QuadratureConfig::default(),
        }
    }
}

struct Sizes {
    residual_states: usize,
    splice_points: usize,
    unimodal_pairs: usize,
    derivative_states: usize,
    derivative_samples: usize,
    mc_states: usize,
    mc_runs: u64,
}

impl Sizes {
    fn for_mode(quick: bool) -> Self {
        if quick {
            Sizes {
                residual_states: 12,
                splice_points: 25,
                unimodal_pairs: 200,
                derivative_states: 8,
                derivative_samples: 12,
                mc_states: 4,
                mc_runs: 20_000,
            }
        } else {
            Sizes {
                residual_states: 100,
                splice_points: 100,
                unimodal_pairs: 1000,
                derivative_states: 50,
                derivative_samples: 50,
                mc_states: 20,
                mc_runs: 200_000,
            }
        }
    }
}

fn outcome(name: &str, metric: f64, threshold: f64, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        metric,
        threshold,
        detail,
    }
}

fn at_most(name: &str, metric: f64, threshold: f64, detail: String) -> CheckOutcome {
    outcome(name, metric, threshold, metric <= threshold, detail)
}

/// Runs the verification battery for one `u`: exact identities of the closed
/// forms, their fixed-point residual, agreement with a solved grid, boundary
/// detection, derivative positivity, monotonicity, `u -> 0` limits and a
/// Monte Carlo cross-check.
pub fn run_verification(params: &ModelParams, opts: &VerifyOptions) -> Result<VerificationReport> {
    use thresholds::*;

    opts.grid.validate()?;
    opts.quad.validate()?;
    let sizes = Sizes::for_mode(opts.quick);
    let quad = &opts.quad;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let mut worst = 0.0_f64;
    for _ in 0..sizes.residual_states {
        let s = sample_closed_form_state(&mut rng, params, 0.05, 5.0, 5.0)?;
        let r = residual_check(|z| closed_form_p(z, params, quad), s, params, quad)?;
        worst = worst.max(r.residual);
    }
    checks.push(at_most(
        "fixed-point residual",
        worst,
        RESIDUAL,
        format!("{} states in R1/R2", sizes.residual_states),
    ));

    let mut worst = 0.0_f64;
    for k in 0..=100 {
        let t = 10.0 * k as f64 / 100.0;
        let p = closed_form_p(State::new(0.0, t)?, params, quad)?;
        worst = worst.max((p - (-(params.v()) * t).exp()).abs());
    }
    checks.push(at_most(
        "zero-ammunition law",
        worst,
        ZERO_AMMO_LAW,
        "t in [0, 10]".into(),
    ));

    let (mut worst_q, mut worst_p) = (0.0_f64, 0.0_f64);
    for _ in 0..sizes.splice_points {
        let x = rng.random_range(0.01..5.0);
        let s = boundary_f_inverse(x, params)?;
        let q = q_integrand(x, s, params)?;
        worst_q = worst_q.max((q - params.kernel(x) * (params.u() * s).exp()).abs());
        let t = rng.random_range(0.05..5.0);
        let on = State::new(boundary_f(t, params)?, t)?;
        let mismatch = (p_spend_all_branch(on, params) - p_band_branch(on, params, quad)?).abs();
        worst_p = worst_p.max(mismatch);
    }
    checks.push(at_most(
        "splice: q at boundary",
        worst_q,
        SPLICE_Q,
        String::new(),
    ));
    checks.push(at_most(
        "splice: P branches",
        worst_p,
        SPLICE_P,
        String::new(),
    ));

    let mut misses = 0;
    let mut worst = 0.0_f64;
    let scan_n = 10_000;
    for _ in 0..sizes.unimodal_pairs {
        let x = rng.random_range(0.0..8.0);
        let b = 10f64.powf(rng.random_range(-3.0..3.0));
        let y = unimodal_argmax(x, b)?;
        let step = x / scan_n as f64;
        let objective = |y: f64| params.kernel(y) * (1.0 + b * params.kernel(x - y));
        let brute = (0..=scan_n)
            .map(|k| k as f64 * step)
            .fold((0.0, f64::NEG_INFINITY), |(by, bv), y| {
                let v = objective(y);
                if v >= bv {
                    (y, v)
                } else {
                    (by, bv)
                }
            })
            .0;
        let err = (y - brute).abs();
        if err > step * (1.0 + 1e-9) {
            misses += 1;
        }
        worst = worst.max(if step > 0.0 { err / step } else { 0.0 });
    }
    checks.push(outcome(
        "unimodal argmax",
        worst,
        1.0,
        misses == 0,
        format!("{} pairs, error in scan steps", sizes.unimodal_pairs),
    ));

    let mut min_d = f64::INFINITY;
    let mut all_pass = true;
    let mut drawn = 0;
    while drawn < sizes.derivative_states {
        let t = rng.random_range(0.05..5.0);
        let f = boundary_f(t, params)?;
        if f > 5.0 {
            continue;
        }
        let x = rng.random_range(f..=2.0 * f);
        if x <= f {
            continue;
        }
        let s = rng.random_range(boundary_f_inverse(x, params)?..=t);
        let r = check_interior_derivative_positive(x, s, params, sizes.derivative_samples, quad)?;
        all_pass &= r.passed;
        min_d = min_d.min(r.min_derivative);
        drawn += 1;
    }
    checks.push(outcome(
        "interior derivative > 0",
        min_d,
        DERIVATIVE_TOLERANCE,
        all_pass,
        format!(
            "{} states x {} samples",
            sizes.derivative_states, sizes.derivative_samples
        ),
    ));

    let probes = limit_probes(&mut rng, 25)?;
    let dev = check_u_zero_limit(&probes, U_LIMIT_EPS, quad)?;
    checks.push(at_most(
        "u -> 0 limits",
        dev,
        U_LIMIT,
        format!("{} probes", probes.len()),
    ));

    let grid = Arc::new(solve_integral_equation(params, &opts.grid)?);
    let dx = grid.spec().dx();

    let t_samples: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
    let mono = check_monotone_k_in_x(params, &t_samples, 1000, Some(&grid))?;
    let outside: usize = mono.numeric.iter().map(|s| s.decreases_outside).sum();
    checks.push(outcome(
        "K increasing in x",
        mono.min_slope_r2.min(mono.min_slope_r1),
        0.0,
        mono.closed_form_increasing,
        format!(
            "{} pairs; numeric decreases outside R2: {outside}",
            mono.n_pairs
        ),
    ));

    let cmp = compare_grid_to_closed_form(&grid, quad)?;
    checks.push(at_most(
        "grid vs closed-form P",
        cmp.max_p_error,
        SOLVER_P,
        format!("{} grid states", cmp.n_states),
    ));
    checks.push(at_most(
        "grid vs closed-form K",
        cmp.max_k_error,
        GRID_STEPS * dx,
        String::new(),
    ));

    let mut worst_gap = 0.0_f64;
    for &t in BOUNDARY_TIMES.iter().filter(|&&t| t <= grid.spec().t_max) {
        worst_gap = worst_gap.max(boundary_detect(&grid, t, 0.5 * dx)?.gap);
    }
    checks.push(at_most(
        "boundary detection",
        worst_gap,
        GRID_STEPS * dx,
        String::new(),
    ));
    let converse = check_partial_spend_beyond_boundary(&grid)?;
    checks.push(outcome(
        "K < x beyond boundary",
        converse.min_margin,
        GRID_STEPS * dx,
        converse.violations == 0,
        format!(
            "{} states, {} violations",
            converse.n_states, converse.violations
        ),
    ));

    let mut failures = 0;
    let mut worst_z = 0.0_f64;
    for k in 0..sizes.mc_states {
        let s = sample_closed_form_state(&mut rng, params, 0.2, 5.0, 5.0)?;
        let p = closed_form_p(s, params, quad)?;
        let cfg = SimConfig::new(sizes.mc_runs, opts.seed.wrapping_add(k as u64), 8)?;
        let r = estimate_survival(&Policy::closed_form(), s, params, &cfg)?;
        let z = (r.p_hat - p).abs() / r.stderr.max(f64::MIN_POSITIVE);
        worst_z = worst_z.max(z);
        if z > MC_SIGMAS {
            failures += 1;
        }
    }
    checks.push(outcome(
        "Monte Carlo vs closed form",
        worst_z,
        MC_SIGMAS,
        failures <= sizes.mc_states / 20,
        format!("{failures}/{} states beyond 4 sigma", sizes.mc_states),
    ));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        u: params.u(),
        quick: opts.quick,
        seed: opts.seed,
        passed,
        checks,
    })
}

/// Probes for every `u`-branched model operation, placed where both `u = 0`
/// and tiny `u` are inside the operation's domain.
pub fn limit_probes<R: Rng + ?Sized>(rng: &mut R, per_op: usize) -> Result<Vec<LimitProbe>> {
    let zero = ModelParams::new(0.0)?;
    let mut probes = Vec::with_capacity(7 * per_op);
    for _ in 0..per_op {
        let t = rng.random_range(0.1..10.0);
        let x = rng.random_range(0.05..5.0);
        probes.push(LimitProbe::BoundaryF { t });
        probes.push(LimitProbe::BoundaryFInverse { x });
        // Keep clear of the region boundaries so both parameter values agree
        // on the branch.
        let f = boundary_f(t, &zero)?;
        let frac = rng.random_range(0.0..1.9);
        let s = State::new(frac * f, t)?;
        probes.push(LimitProbe::ClosedFormK(s));
        probes.push(LimitProbe::ClosedFormP(s));
        let y = rng.random_range(0.0..=x);
        probes.push(LimitProbe::G1 { y, s: t, x });
        probes.push(LimitProbe::QIntegrand { y: x, s: t });
        let lower = boundary_f_inverse(x, &zero)?;
        probes.push(LimitProbe::Q2 {
            y: x,
            s: lower * 1.001 + rng.random_range(0.0..3.0),
        });
    }
    Ok(probes)
}

/// Worst disagreement between a solved grid and the closed forms over all
/// grid states in `R1 ∪ R2` with `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub n_states: usize,
    pub max_p_error: f64,
    pub max_k_error: f64,
}

pub fn compare_grid_to_closed_form(
    grid: &SolutionGrid,
    quad: &QuadratureConfig,
) -> Result<GridComparison> {
    let params = grid.params();
    let spec = grid.spec();
    let mut cmp = GridComparison {
        n_states: 0,
        max_p_error: 0.0,
        max_k_error: 0.0,
    };
    for j in 1..spec.nt {
        let t = grid.t(j);
        let top = 2.0 * boundary_f(t, params)?;
        for i in 0..spec.nx {
            let x = grid.x(i);
            if x > top {
                break;
            }
            let s = State::new(x, t)?;
            if !classify_region(s, params)?.has_closed_form() {
                continue;
            }
            let p = closed_form_p(s, params, quad)?;
            let k = closed_form_k(s, params)?;
            cmp.n_states += 1;
            cmp.max_p_error = cmp.max_p_error.max((grid.p_at(i, j) - p).abs());
            cmp.max_k_error = cmp.max_k_error.max((grid.kstar_at(i, j) - k).abs());
        }
    }
    Ok(cmp)
}

/// Grid states at least four cells beyond the boundary, where the numeric
/// allocation must hold back more than two cells of ammunition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSpendScan {
    pub n_states: usize,
    pub violations: usize,
    /// Smallest `x - K` seen.
    pub min_margin: f64,
}

pub fn check_partial_spend_beyond_boundary(grid: &SolutionGrid) -> Result<PartialSpendScan> {
    let params = grid.params();
    let spec = grid.spec();
    let dx = spec.dx();
    let mut scan = PartialSpendScan {
        n_states: 0,
        violations: 0,
        min_margin: f64::INFINITY,
    };
    for j in 1..spec.nt {
        let f = boundary_f(grid.t(j), params)?;
        for i in 0..spec.nx {
            let x = grid.x(i);
            if x < f + 4.0 * dx {
                continue;
            }
            let margin = x - grid.kstar_at(i, j);
            scan.n_states += 1;
            scan.min_margin = scan.min_margin.min(margin);
            if !(margin > 2.0 * dx) {
                scan.violations += 1;
            }
        }
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Scheme;

    fn params(u: f64) -> ModelParams {
        ModelParams::new(u).unwrap()
    }

    fn quad() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn closed_form_is_a_fixed_point_on_r1_and_r2() {
        for &u in &[0.0, 0.3, 0.8] {
            let p = params(u);
            for &(frac, t) in &[(0.5, 0.7), (1.0, 1.3), (1.5, 2.0), (2.0, 0.4)] {
                let f = boundary_f(t, &p).unwrap();
                let s = State::new(frac * f, t).unwrap();
                let r = residual_check(|z| closed_form_p(z, &p, &quad()), s, &p, &quad()).unwrap();
                assert!(r.residual < 1e-6, "u={u} {s:?}: {r:?}");
                assert!(r.lhs > 0.0 && r.lhs <= 1.0 && r.rhs > 0.0 && r.rhs <= 1.0);
            }
        }
    }

    #[test]
    fn residual_at_time_zero() {
        let p = params(0.4);
        let s = State::new(2.0, 0.0).unwrap();
        let r = residual_check(|_| Ok(1.0), s, &p, &quad()).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (1.0, 1.0, 0.0));
    }

    #[test]
    fn corrupted_candidate_is_caught() {
        // For a shifted candidate P + c on R1 the residual is
        // c (1 - a(x)(1 - e^{-t})), which is at least c/2 when a(x)(1 - e^{-t}) <= 1/2.
        let c = 0.01;
        for &u in &[0.0, 0.5] {
            let p = params(u);
            for &(x, t) in &[(0.3, 0.3), (0.8, 0.5), (0.1, 0.05)] {
                let s = State::new(x, t).unwrap();
                assert_eq!(classify_region(s, &p).unwrap(), Region::R1);
                let shifted = |z: State| closed_form_p(z, &p, &quad()).map(|v| v + c);
                let r = residual_check(shifted, s, &p, &quad()).unwrap();
                let predicted = c * (1.0 - p.kernel(x) * (1.0 - (-t).exp()));
                assert!(r.residual >= 5e-3, "{r:?}");
                assert!(
                    (r.residual - predicted).abs() < 1e-8,
                    "{} vs {predicted}",
                    r.residual
                );
            }
        }
    }

    #[test]
    fn residual_propagates_candidate_errors() {
        let p = params(0.3);
        let f = boundary_f(1.0, &p).unwrap();
        let s = State::new(3.0 * f, 1.0).unwrap();
        let err = residual_check(|z| closed_form_p(z, &p, &quad()), s, &p, &quad()).unwrap_err();
        assert!(matches!(err, BomberError::UnsupportedRegion { .. }));
    }

    #[test]
    fn boundary_detection_on_modest_grid() {
        let p = params(0.0);
        let spec = GridSpec::new(3.0, 4.0, 241, 161, Scheme::Rk4).unwrap();
        let grid = solve_integral_equation(&p, &spec).unwrap();
        let dx = spec.dx();
        let est = boundary_detect(&grid, 1.0, 0.5 * dx).unwrap();
        assert!((est.x_analytic - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(est.gap <= 2.0 * dx, "{est:?}");
        // Near t = 0 the whole column spends everything.
        let early = boundary_detect(&grid, spec.dt(), 0.5 * dx).unwrap();
        assert_eq!(early.x_detected, 3.0);
        assert!(boundary_detect(&grid, 0.0, dx).is_err());
        assert!(boundary_detect(&grid, 5.0, dx).is_err());
    }

    #[test]
    fn boundary_detection_shrinks_with_time() {
        let p = params(0.5);
        let spec = GridSpec::new(1.0, 60.0, 101, 601, Scheme::Rk4).unwrap();
        let grid = solve_integral_equation(&p, &spec).unwrap();
        let late = boundary_detect(&grid, 60.0, 0.5 * spec.dx()).unwrap();
        assert!(late.x_detected <= 2.0 * spec.dx(), "{late:?}");
        assert!(late.x_analytic < 1e-10);
    }

    #[test]
    fn derivative_positive_on_band_states() {
        for &u in &[0.0, 0.3, 0.7] {
            let p = params(u);
            for &(frac, t) in &[(1.5, 1.0), (1.99, 2.5), (1.2, 0.3)] {
                let f = boundary_f(t, &p).unwrap();
                let x = frac * f;
                let lower = boundary_f_inverse(x, &p).unwrap();
                for &s in &[lower, 0.5 * (lower + t), t] {
                    let r = check_interior_derivative_positive(x, s, &p, 20, &quad()).unwrap();
                    assert!(r.passed, "u={u} x={x} s={s}: {r:?}");
                    assert!(r.max_step_sensitivity < 0.1, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn derivative_check_edge_cases() {
        let p = params(0.3);
        let f = boundary_f(1.0, &p).unwrap();
        let vacuous = check_interior_derivative_positive(0.5 * f, 1.0, &p, 10, &quad()).unwrap();
        assert!(vacuous.passed && vacuous.n_checked == 0);
        assert!(check_interior_derivative_positive(2.5 * f, 1.0, &p, 10, &quad()).is_err());
        // Two samples are exactly the two ends.
        let r = check_interior_derivative_positive(1.8 * f, 1.0, &p, 2, &quad()).unwrap();
        assert!((r.y_max - 0.8 * f).abs() < 1e-12);
        assert!(r.passed && r.n_checked == 2);
        // A cell narrower than the step forces the backward formula.
        let tight = 1.0 + 1e-7;
        let r = check_interior_derivative_positive(tight * f, 1.0, &p, 3, &quad()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn closed_form_k_is_strictly_increasing() {
        let p = params(0.3);
        let r = check_monotone_k_in_x(&p, &[0.5, 1.0, 4.0], 1000, None).unwrap();
        assert!(r.closed_form_increasing);
        assert!((r.min_slope_r1 - 1.0).abs() < 1e-9);
        assert!((r.min_slope_r2 - 0.5).abs() < 1e-9);
        assert_eq!(r.n_pairs, 3 * 999);
        assert!(r.numeric.is_empty());
    }

    #[test]
    fn numeric_monotone_scan_reports_only() {
        let p = params(0.3);
        let spec = GridSpec::new(3.0, 3.0, 121, 121, Scheme::Rk4).unwrap();
        let grid = solve_integral_equation(&p, &spec).unwrap();
        let r = check_monotone_k_in_x(&p, &[1.0, 3.0], 50, Some(&grid)).unwrap();
        assert_eq!(r.numeric.len(), 2);
        assert!(r.closed_form_increasing);
    }

    #[test]
    fn u_zero_limits() {
        let q = quad();
        let ts: Vec<LimitProbe> = (1..=100)
            .map(|k| LimitProbe::BoundaryF { t: 0.1 * k as f64 })
            .collect();
        assert!(check_u_zero_limit(&ts, 1e-8, &q).unwrap() <= 1e-6);
        let p0 = params(0.0);
        let r1: Vec<LimitProbe> = (1..=20)
            .map(|k| {
                let t = 0.25 * k as f64;
                LimitProbe::ClosedFormP(State::new(0.9 * boundary_f(t, &p0).unwrap(), t).unwrap())
            })
            .collect();
        assert!(check_u_zero_limit(&r1, 1e-8, &q).unwrap() <= 1e-6);
        let qs: Vec<LimitProbe> = (0..20)
            .map(|k| LimitProbe::QIntegrand {
                y: 0.2 * k as f64,
                s: 0.3 * k as f64,
            })
            .collect();
        assert!(check_u_zero_limit(&qs, 1e-8, &q).unwrap() <= 1e-6);
        assert!(check_u_zero_limit(&qs, 1e-3, &q).is_err());
    }

    #[test]
    fn random_limit_probes_cover_every_operation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probes = limit_probes(&mut rng, 10).unwrap();
        assert_eq!(probes.len(), 70);
        assert!(check_u_zero_limit(&probes, 1e-8, &quad()).unwrap() <= 1e-6);
    }

    #[test]
    fn report_renders() {
        let report = VerificationReport {
            u: 0.5,
            quick: true,
            seed: 1,
            passed: false,
            checks: vec![outcome("x", 1.0, 2.0, false, "d".into())],
        };
        let text = report.to_string();
        assert!(text.contains("[FAIL] x"));
        assert!(text.ends_with("overall: FAIL"));
    }
}

//! Closed-form mathematics of the continuous Bomber Problem.
//!
//! A bomber holding `x` units of ammunition with `t` time units to go meets
//! enemies arriving as a rate-1 Poisson process. Firing `y` units at an enemy
//! survives the encounter with probability `a(y) = 1 - (1 - u) e^{-y}`.
//!
//! The boundary `f_u(t)` splits the state space into the spend-it-all region
//! `R1 = {x <= f_u(t)}`, the band `R2 = {f_u(t) < x <= 2 f_u(t)}`, and the rest,
//! where no closed form is known. On `R1 ∪ R2` the optimal allocation `K` and
//! survival probability `P` are available exactly (up to one quadrature).
//!
//! `u = 0` is evaluated on its own branch using the `u -> 0` limits. All
//! `u`-dependent factors go through `expm1`/`ln_1p`, so tiny positive `u`
//! approaches those limits without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{BomberError, Result};
use crate::quadrature::{integrate, QuadratureConfig};

/// Counterattack parameter `u` in `[0, 1)` and its complement `v = 1 - u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    u: f64,
    v: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    u: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = BomberError;
    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.u)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { u: p.u }
    }
}

impl ModelParams {
    pub fn new(u: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&u) {
            return Err(BomberError::domain(format!(
                "u must lie in [0, 1), got {u}"
            )));
        }
        Ok(ModelParams { u, v: 1.0 - u })
    }

    #[inline]
    pub fn u(&self) -> f64 {
        self.u
    }

    #[inline]
    pub fn v(&self) -> f64 {
        self.v
    }

    /// Unchecked survival kernel `1 - v e^{-y}`. Evaluates the analytic
    /// continuation for negative `y`.
    #[inline]
    pub fn kernel(&self, y: f64) -> f64 {
        1.0 - self.v * (-y).exp()
    }

    /// `(e^{su} - 1) / u`, or `s` when `u = 0`.
    #[inline]
    pub fn growth(&self, s: f64) -> f64 {
        if self.u == 0.0 {
            s
        } else {
            (s * self.u).exp_m1() / self.u
        }
    }
}

/// A point in state space: ammunition `x` and time-to-go `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub t: f64,
}

impl State {
    pub fn new(x: f64, t: f64) -> Result<Self> {
        let s = State { x, t };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x >= 0.0) || !self.x.is_finite() {
            return Err(BomberError::domain(format!(
                "ammunition must be finite and nonnegative, got {}",
                self.x
            )));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(BomberError::domain(format!(
                "time-to-go must be finite and nonnegative, got {}",
                self.t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Spend-it-all: `x <= f_u(t)`.
    R1,
    /// `f_u(t) < x <= 2 f_u(t)`.
    R2,
    /// `x > 2 f_u(t)`.
    Outside,
}

impl Region {
    pub fn has_closed_form(self) -> bool {
        !matches!(self, Region::Outside)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::R1 => "R1",
            Region::R2 => "R2",
            Region::Outside => "Outside",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probability of surviving one encounter when firing `y` units.
pub fn survival_kernel(y: f64, params: &ModelParams) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(BomberError::domain(format!(
            "allocation must be nonnegative, got {y}"
        )));
    }
    Ok(params.kernel(y))
}

/// The spend-it-all boundary `f_u(t)`, strictly decreasing from `+inf` at
/// `t = 0+` to `0` as `t -> inf`.
pub fn boundary_f(t: f64, params: &ModelParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(BomberError::domain(format!(
            "boundary needs t > 0, got {t}"
        )));
    }
    let u = params.u();
    Ok(if u == 0.0 {
        (1.0 / t).ln_1p()
    } else {
        (u / (t * u).exp_m1()).ln_1p()
    })
}

/// Inverse of [`boundary_f`]: the time-to-go at which ammunition `x` sits
/// exactly on the boundary.
pub fn boundary_f_inverse(x: f64, params: &ModelParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(BomberError::domain(format!(
            "boundary inverse needs x > 0, got {x}"
        )));
    }
    let u = params.u();
    Ok(if u == 0.0 {
        1.0 / x.exp_m1()
    } else {
        (u / x.exp_m1()).ln_1p() / u
    })
}

/// Classifies `s` using exact comparisons against the computed boundary.
pub fn classify_region(s: State, params: &ModelParams) -> Result<Region> {
    classify_region_with_tolerance(s, params, 0.0)
}

/// Like [`classify_region`], but treats points within `tol` above a boundary
/// as lying on it.
pub fn classify_region_with_tolerance(s: State, params: &ModelParams, tol: f64) -> Result<Region> {
    s.validate()?;
    if !(tol >= 0.0) {
        return Err(BomberError::domain(format!(
            "tolerance must be nonnegative, got {tol}"
        )));
    }
    if s.t == 0.0 {
        // f_u(t) -> inf as t -> 0+, so every magazine is spent at once.
        return Ok(Region::R1);
    }
    let f = boundary_f(s.t, params)?;
    Ok(if s.x <= f + tol {
        Region::R1
    } else if s.x <= 2.0 * f + tol {
        Region::R2
    } else {
        Region::Outside
    })
}

/// The optimal allocation `K(x, t)` on `R1 ∪ R2`.
pub fn closed_form_k(s: State, params: &ModelParams) -> Result<f64> {
    s.validate()?;
    if s.t == 0.0 {
        // f_u(0+) is infinite: every state spends it all.
        return Ok(s.x);
    }
    match classify_region(s, params)? {
        Region::R1 => Ok(s.x),
        Region::R2 => Ok(0.5 * (s.x + boundary_f(s.t, params)?)),
        region => Err(BomberError::UnsupportedRegion {
            region,
            x: s.x,
            t: s.t,
        }),
    }
}

/// The optimal survival probability `P(x, t)` on `R1 ∪ R2`.
pub fn closed_form_p(s: State, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    s.validate()?;
    if s.t == 0.0 {
        return Ok(1.0);
    }
    match classify_region(s, params)? {
        Region::R1 => Ok(p_spend_all_branch(s, params)),
        Region::R2 => p_band_branch(s, params, quad),
        region => Err(BomberError::UnsupportedRegion {
            region,
            x: s.x,
            t: s.t,
        }),
    }
}

/// The `R1` formula `e^{-t} (1 + a(x) (e^{tu} - 1)/u)`, evaluated without
/// checking which region `s` lies in.
pub fn p_spend_all_branch(s: State, params: &ModelParams) -> f64 {
    (-s.t).exp() * (1.0 + params.kernel(s.x) * params.growth(s.t))
}

/// The `R2` formula `e^{-t} q2(x, t)`, evaluated without checking which
/// region `s` lies in. Needs `t >= f_u^{-1}(x)` up to round-off.
pub fn p_band_branch(s: State, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    Ok((-s.t).exp() * q2(s.x, s.t, params, quad)?)
}

/// Maximiser over `[0, x]` of `y -> a(y) (1 + B a(x - y))`, which is
/// unimodal about `(x + ln(1 + 1/B)) / 2` for every `u`.
pub fn unimodal_argmax(x: f64, b: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(BomberError::domain(format!(
            "ammunition must be nonnegative, got {x}"
        )));
    }
    if !(b > 0.0) {
        return Err(BomberError::domain(format!("B must be positive, got {b}")));
    }
    let peak = 0.5 * (x + (1.0 / b).ln_1p());
    Ok(peak.clamp(0.0, x))
}

/// `G1(y, s) = a(y) [1 + a(x - y) (e^{su} - 1)/u]`: the value of firing `y`
/// at time-to-go `s` when every successor state is spend-it-all.
pub fn g1(y: f64, s: f64, x: f64, params: &ModelParams) -> Result<f64> {
    if !(x >= 0.0) || !(y >= 0.0 && y <= x) {
        return Err(BomberError::domain(format!(
            "allocation {y} outside [0, {x}]"
        )));
    }
    if !(s >= 0.0) {
        return Err(BomberError::domain(format!(
            "time must be nonnegative, got {s}"
        )));
    }
    Ok(params.kernel(y) * (1.0 + params.kernel(x - y) * params.growth(s)))
}

/// `q(y, s) = (sqrt(e^{su} - v) - v e^{-y/2} sqrt(e^{su} - 1))^2 / u`, the
/// integrand of the band formula. With `E = (e^{su} - 1)/u` this equals
/// `(sqrt(E + 1) - v e^{-y/2} sqrt(E))^2`, which is how it is evaluated; the
/// `u = 0` branch is `(sqrt(s + 1) - e^{-y/2} sqrt(s))^2`.
pub fn q_integrand(y: f64, s: f64, params: &ModelParams) -> Result<f64> {
    if !(y >= 0.0) || !(s >= 0.0) {
        return Err(BomberError::domain(format!(
            "q needs y >= 0 and s >= 0, got ({y}, {s})"
        )));
    }
    Ok(q_unchecked(y, s, params))
}

#[inline]
fn q_unchecked(y: f64, s: f64, params: &ModelParams) -> f64 {
    let (e, v) = if params.u() == 0.0 {
        (s, 1.0)
    } else {
        (params.growth(s), params.v())
    };
    let d = (e + 1.0).sqrt() - v * (-0.5 * y).exp() * e.sqrt();
    d * d
}

// Relative slack below the boundary time accepted by `q2`, so that states
// placed on the boundary by round-trip arithmetic still evaluate.
const BOUNDARY_SLACK: f64 = 1e-9;

/// `Q2(y, s) = 1 + a(y)/(e^y - 1) + ∫_{f_u^{-1}(y)}^{s} q(y, r) dr`, which is
/// `e^s P(y, s)` on `R2`.
pub fn q2(y: f64, s: f64, params: &ModelParams, quad: &QuadratureConfig) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(BomberError::domain(format!(
            "Q2 needs finite y > 0, got {y}"
        )));
    }
    let lower = boundary_f_inverse(y, params)?;
    if !(s >= lower - BOUNDARY_SLACK * lower.max(1.0)) {
        return Err(BomberError::domain(format!(
            "Q2({y}, {s}) is below the boundary time {lower}"
        )));
    }
    let integral = integrate(|r| Ok(q_unchecked(y, r.max(0.0), params)), lower, s, quad)?;
    Ok(1.0 + params.kernel(y) / y.exp_m1() + integral.value)
}

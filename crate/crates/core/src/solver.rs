//! Grid solver for the survival-probability integral equation.
//!
//! With `Pbar(x, t) = e^t P(x, t)` the equation becomes
//!
//! ```text
//! Pbar(x, t) = 1 + ∫_0^t max_{0<=y<=x} a(y) Pbar(x - y, s) ds,
//! ```
//!
//! so each grid row obeys `d/dt Pbar(x, t) = max_y a(y) Pbar(x - y, t)` with
//! `Pbar(·, 0) = 1`. The right-hand side at a row only reads rows with smaller
//! `x`, and the whole family is marched forward in `t` with Euler or RK4. The
//! maximiser at each `(x_i, t_j)` is recorded as the numeric allocation `K`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BomberError, Result};
use crate::interp::{Interpolation, UniformInterpolant};
use crate::model::{ModelParams, State};
use crate::optimize::{golden_section_max, scan_then_golden_max};

/// Largest admissible `t_max`; beyond it `e^t` overflows double precision.
pub const T_MAX_CAP: f64 = 700.0;

/// Above this time-to-go `P` is recovered as `exp(ln Pbar - t)`.
const LOG_SPACE_T: f64 = 30.0;

const REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = BomberError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(BomberError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_max: f64,
    pub t_max: f64,
    /// Number of x nodes, including both ends.
    pub nx: usize,
    /// Number of t nodes, including `t = 0`.
    pub nt: usize,
    pub scheme: Scheme,
    pub interpolation: Interpolation,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_max: 5.0,
            t_max: 5.0,
            nx: 2001,
            nt: 2001,
            scheme: Scheme::Rk4,
            interpolation: Interpolation::MonotoneCubic,
        }
    }
}

impl GridSpec {
    pub fn new(x_max: f64, t_max: f64, nx: usize, nt: usize, scheme: Scheme) -> Result<Self> {
        let spec = GridSpec {
            x_max,
            t_max,
            nx,
            nt,
            scheme,
            ..GridSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > 0.0) || !self.x_max.is_finite() {
            return Err(BomberError::Config(format!(
                "x_max must be positive, got {}",
                self.x_max
            )));
        }
        if !(self.t_max > 0.0) || self.t_max > T_MAX_CAP {
            return Err(BomberError::Config(format!(
                "t_max must lie in (0, {T_MAX_CAP}], got {}",
                self.t_max
            )));
        }
        if self.nx < 2 || self.nt < 2 {
            return Err(BomberError::Config(format!(
                "grids need at least two nodes per axis, got nx={} nt={}",
                self.nx, self.nt
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.x_max / (self.nx - 1) as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }
}

/// `Pbar` and the maximising allocation on a rectangular `(x, t)` grid.
///
/// Storage is column-major in `t`: entry `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGrid {
    spec: GridSpec,
    params: ModelParams,
    pbar: Vec<f64>,
    kstar: Vec<f64>,
}

impl SolutionGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.spec.nx {
            self.spec.x_max
        } else {
            i as f64 * self.spec.dx()
        }
    }

    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        if j + 1 == self.spec.nt {
            self.spec.t_max
        } else {
            j as f64 * self.spec.dt()
        }
    }

    #[inline]
    pub fn pbar_at(&self, i: usize, j: usize) -> f64 {
        self.pbar[j * self.spec.nx + i]
    }

    #[inline]
    pub fn kstar_at(&self, i: usize, j: usize) -> f64 {
        self.kstar[j * self.spec.nx + i]
    }

    /// Survival probability at node `(i, j)`.
    pub fn p_at(&self, i: usize, j: usize) -> f64 {
        untransform(self.pbar_at(i, j), self.t(j))
    }

    /// `Pbar` over all x nodes at time index `j`.
    pub fn pbar_column(&self, j: usize) -> &[f64] {
        let nx = self.spec.nx;
        &self.pbar[j * nx..(j + 1) * nx]
    }

    pub fn kstar_column(&self, j: usize) -> &[f64] {
        let nx = self.spec.nx;
        &self.kstar[j * nx..(j + 1) * nx]
    }

    /// Time index whose node is closest to `t`.
    pub fn nearest_t_index(&self, t: f64) -> usize {
        ((t / self.spec.dt()).round().max(0.0) as usize).min(self.spec.nt - 1)
    }

    fn check_domain(&self, s: State) -> Result<()> {
        s.validate()?;
        let slack = 1e-12;
        if s.x > self.spec.x_max * (1.0 + slack) || s.t > self.spec.t_max * (1.0 + slack) {
            return Err(BomberError::domain(format!(
                "state ({}, {}) outside grid [0, {}] x [0, {}]",
                s.x, s.t, self.spec.x_max, self.spec.t_max
            )));
        }
        Ok(())
    }

    fn bilinear(&self, data: &[f64], s: State) -> f64 {
        let (i, wx) = locate(s.x, self.spec.dx(), self.spec.nx);
        let (j, wt) = locate(s.t, self.spec.dt(), self.spec.nt);
        let nx = self.spec.nx;
        let at = |i: usize, j: usize| data[j * nx + i];
        let i1 = (i + 1).min(nx - 1);
        let j1 = (j + 1).min(self.spec.nt - 1);
        let lo = at(i, j) + wx * (at(i1, j) - at(i, j));
        if wt == 0.0 {
            return lo;
        }
        let hi = at(i, j1) + wx * (at(i1, j1) - at(i, j1));
        lo + wt * (hi - lo)
    }

    /// `P(x, t)` from the grid: bilinear `Pbar` times `e^{-t}`.
    pub fn numeric_p(&self, s: State) -> Result<f64> {
        self.check_domain(s)?;
        Ok(untransform(self.bilinear(&self.pbar, s), s.t))
    }

    /// `K(x, t)` from the grid by bilinear interpolation of the maximisers.
    pub fn numeric_k(&self, s: State) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.bilinear(&self.kstar, s).clamp(0.0, s.x))
    }
}

#[inline]
fn untransform(pbar: f64, t: f64) -> f64 {
    if t > LOG_SPACE_T {
        (pbar.ln() - t).exp()
    } else {
        (-t).exp() * pbar
    }
}

/// Cell index and fractional offset of `v` on a uniform axis, snapping to
/// nodes so lookups at grid points are exact.
#[inline]
fn locate(v: f64, step: f64, n: usize) -> (usize, f64) {
    let r = (v / step).clamp(0.0, (n - 1) as f64);
    let nearest = r.round();
    if (r - nearest).abs() < 1e-9 {
        return (nearest as usize, 0.0);
    }
    let j = (r.floor() as usize).min(n - 2);
    (j, r - j as f64)
}

/// Maximises `y -> a(y) * pbar_slice(x - y)` over `[0, x]` by a 256-cell scan
/// followed by golden-section refinement. Returns `(argmax, max)`, with ties
/// going to the larger allocation.
pub fn inner_max<F>(x: f64, pbar_slice: F, params: &ModelParams) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    inner_max_with(x, pbar_slice, params, 256)
}

pub fn inner_max_with<F>(x: f64, pbar_slice: F, params: &ModelParams, n_scan: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    if x <= 0.0 {
        return (0.0, params.u() * pbar_slice(0.0));
    }
    scan_then_golden_max(
        |y| params.kernel(y) * pbar_slice((x - y).max(0.0)),
        0.0,
        x,
        n_scan,
        REFINE_TOL,
    )
}

/// Right-hand side of the row ODEs, evaluated against one `Pbar` column.
struct RowMaximiser {
    params: ModelParams,
    kernel: Vec<f64>,
    dx: f64,
    interpolation: Interpolation,
}

impl RowMaximiser {
    fn new(params: ModelParams, spec: &GridSpec) -> Self {
        let dx = spec.dx();
        let kernel = (0..spec.nx).map(|k| params.kernel(k as f64 * dx)).collect();
        RowMaximiser {
            params,
            kernel,
            dx,
            interpolation: spec.interpolation,
        }
    }

    /// Writes the derivative and the maximising allocation for every row.
    fn eval(&self, column: &[f64], deriv: &mut [f64], argmax: &mut [f64]) -> Result<()> {
        let interp = UniformInterpolant::new(column, self.dx, self.interpolation)?;
        deriv
            .par_iter_mut()
            .zip(argmax.par_iter_mut())
            .enumerate()
            .for_each(|(i, (d, k))| {
                let (y, v) = self.row_max(i, column, &interp);
                *d = v;
                *k = y;
            });
        Ok(())
    }

    fn row_max(&self, i: usize, column: &[f64], interp: &UniformInterpolant<'_>) -> (f64, f64) {
        if i == 0 {
            return (0.0, self.kernel[0] * column[0]);
        }
        let (k, best) = node_scan(&self.kernel[..=i], &column[..=i]);
        let x = i as f64 * self.dx;
        let lo = k.saturating_sub(1) as f64 * self.dx;
        let hi = ((k + 1) as f64 * self.dx).min(x);
        let (y, v) = golden_section_max(
            |y| self.params.kernel(y) * interp.eval_clamped(x - y),
            lo,
            hi,
            REFINE_TOL,
        );
        let node_y = k as f64 * self.dx;
        if v > best || (v == best && y > node_y) {
            (y, v)
        } else {
            (node_y, best)
        }
    }
}

/// Index and value of `max_k kernel[k] * column[i - k]` with `i = len - 1`,
/// taking the largest index among exact ties.
#[inline]
fn node_scan(kernel: &[f64], column: &[f64]) -> (usize, f64) {
    debug_assert_eq!(kernel.len(), column.len());
    let mut lanes = [f64::NEG_INFINITY; 4];
    let a_chunks = kernel.chunks_exact(4);
    let p_chunks = column.rchunks_exact(4);
    let (a_tail, p_head) = (a_chunks.remainder(), p_chunks.remainder());
    for (a, p) in a_chunks.zip(p_chunks) {
        for l in 0..4 {
            lanes[l] = lanes[l].max(a[l] * p[3 - l]);
        }
    }
    let mut best = lanes[0].max(lanes[1]).max(lanes[2].max(lanes[3]));
    for (a, p) in a_tail.iter().zip(p_head.iter().rev()) {
        best = best.max(a * p);
    }
    let last = kernel.len() - 1;
    let k = (0..=last)
        .rev()
        .find(|&k| kernel[k] * column[last - k] == best)
        .unwrap_or(last);
    (k, best)
}

/// Marches `Pbar` from `t = 0` to `spec.t_max` on the grid described by `spec`.
/// The result is a deterministic function of the inputs.
pub fn solve_integral_equation(params: &ModelParams, spec: &GridSpec) -> Result<SolutionGrid> {
    spec.validate()?;
    let (nx, nt) = (spec.nx, spec.nt);
    let dt = spec.dt();
    let rhs = RowMaximiser::new(*params, spec);

    let mut pbar = vec![0.0; nx * nt];
    let mut kstar = vec![0.0; nx * nt];
    pbar[..nx].fill(1.0);

    let mut k1 = vec![0.0; nx];
    let mut k2 = vec![0.0; nx];
    let mut k3 = vec![0.0; nx];
    let mut k4 = vec![0.0; nx];
    let mut stage = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];

    rhs.eval(&pbar[..nx], &mut k1, &mut kstar[..nx])?;

    for step in 0..nt - 1 {
        let (done, rest) = pbar.split_at_mut((step + 1) * nx);
        let current = &done[step * nx..];
        let next = &mut rest[..nx];
        match spec.scheme {
            Scheme::Euler => {
                for i in 0..nx {
                    next[i] = current[i] + dt * k1[i];
                }
            }
            Scheme::Rk4 => {
                for i in 0..nx {
                    stage[i] = current[i] + 0.5 * dt * k1[i];
                }
                rhs.eval(&stage, &mut k2, &mut scratch)?;
                for i in 0..nx {
                    stage[i] = current[i] + 0.5 * dt * k2[i];
                }
                rhs.eval(&stage, &mut k3, &mut scratch)?;
                for i in 0..nx {
                    stage[i] = current[i] + dt * k3[i];
                }
                rhs.eval(&stage, &mut k4, &mut scratch)?;
                for i in 0..nx {
                    next[i] = current[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
        }
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(BomberError::NonFinite { step, x_index: i });
        }
        let kcol = &mut kstar[(step + 1) * nx..(step + 2) * nx];
        rhs.eval(next, &mut k1, kcol)?;
    }

    Ok(SolutionGrid {
        spec: *spec,
        params: *params,
        pbar,
        kstar,
    })
}

//! Interpolation of values tabulated on a uniform grid `x_i = i * dx`.
//!
//! The monotone cubic is a Hermite spline whose node slopes come from
//! fourth-order central differences, limited so that every interval is
//! monotone (Hyman's filter). On smooth monotone data the limiter is
//! inactive and the spline keeps its fourth-order accuracy; where the data
//! has a local extremum or a flat stretch the slope is pinned to zero. Either
//! way the interpolant never leaves the range of the two bracketing nodes.

use serde::{Deserialize, Serialize};

use crate::error::{BomberError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    #[default]
    MonotoneCubic,
}

/// Interpolant over one tabulated column.
#[derive(Debug, Clone)]
pub struct UniformInterpolant<'a> {
    values: &'a [f64],
    dx: f64,
    slopes: Vec<f64>,
}

impl<'a> UniformInterpolant<'a> {
    pub fn new(values: &'a [f64], dx: f64, kind: Interpolation) -> Result<Self> {
        if values.len() < 2 {
            return Err(BomberError::domain(
                "interpolation needs at least two nodes",
            ));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(BomberError::domain(format!(
                "grid spacing must be positive, got {dx}"
            )));
        }
        let slopes = match kind {
            Interpolation::Linear => Vec::new(),
            Interpolation::MonotoneCubic => monotone_slopes(values, dx),
        };
        Ok(UniformInterpolant { values, dx, slopes })
    }

    pub fn x_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dx
    }

    /// Checked evaluation; `x` must lie in `[0, x_max]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let x_max = self.x_max();
        let slack = 1e-12 * x_max;
        if !(x >= -slack && x <= x_max + slack) {
            return Err(BomberError::domain(format!(
                "interpolation query {x} outside [0, {x_max}]"
            )));
        }
        Ok(self.eval_clamped(x))
    }

    /// Evaluation with `x` clamped into the tabulated range.
    #[inline]
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let n = self.values.len();
        let r = (x / self.dx).clamp(0.0, (n - 1) as f64);
        let nearest = r.round();
        if (r - nearest).abs() < 1e-12 {
            return self.values[nearest as usize];
        }
        let j = (r.floor() as usize).min(n - 2);
        let s = r - j as f64;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        if self.slopes.is_empty() {
            return y0 + s * (y1 - y0);
        }
        let (m0, m1) = (self.slopes[j] * self.dx, self.slopes[j + 1] * self.dx);
        let s2 = s * s;
        let one_minus = 1.0 - s;
        let h10 = s * one_minus * one_minus;
        let h01 = s2 * (3.0 - 2.0 * s);
        let h11 = s2 * (s - 1.0);
        y0 + h01 * (y1 - y0) + h10 * m0 + h11 * m1
    }
}

/// One-off evaluation of the interpolant of `values` (spacing `dx`) at `x`.
pub fn interpolate(values: &[f64], dx: f64, x: f64, kind: Interpolation) -> Result<f64> {
    UniformInterpolant::new(values, dx, kind)?.eval(x)
}

fn monotone_slopes(y: &[f64], dx: f64) -> Vec<f64> {
    let n = y.len();
    let secant: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
    if n == 2 {
        return vec![secant[0]; 2];
    }

    let mut m = vec![0.0; n];
    m[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dx);
    m[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dx);
    for i in 1..n - 1 {
        m[i] = if i >= 2 && i + 2 < n {
            (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * dx)
        } else {
            (y[i + 1] - y[i - 1]) / (2.0 * dx)
        };
    }

    for i in 0..n {
        let left = if i > 0 { Some(secant[i - 1]) } else { None };
        let right = if i + 1 < n { Some(secant[i]) } else { None };
        m[i] = match (left, right) {
            (Some(l), Some(r)) => limit(m[i], l, r),
            (Some(d), None) | (None, Some(d)) => limit(m[i], d, d),
            (None, None) => unreachable!(),
        };
    }
    m
}

#[inline]
fn limit(m: f64, left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        return 0.0;
    }
    let sign = left.signum();
    let bound = 3.0 * left.abs().min(right.abs());
    sign * (sign * m).clamp(0.0, bound)
}

//! Monte Carlo simulation of bombing missions.
//!
//! Enemies arrive at rate 1 while time-to-go runs down. At each arrival the
//! policy picks an allocation `y`, the encounter is survived with probability
//! `a(y)` (one uniform draw), and `y` is removed from the magazine.
//!
//! Every run draws from its own ChaCha8 keystream: the key comes from the
//! seed, the ChaCha stream id is the simulation stream, and the run index
//! selects a disjoint block range. Results therefore do not depend on how
//! runs are scheduled across threads.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BomberError, Result};
use crate::model::{classify_region, closed_form_k, ModelParams, State};
use crate::solver::SolutionGrid;

/// A deterministic allocation rule `State -> y`.
#[derive(Debug, Clone)]
pub enum Policy {
    /// The exact optimum on `R1 ∪ R2`. Elsewhere it defers to the grid if one
    /// is attached and fails otherwise.
    ClosedForm { fallback: Option<Arc<SolutionGrid>> },
    /// Bilinear lookup into a solved grid's maximisers.
    GridInterpolated(Arc<SolutionGrid>),
    /// Fire everything at every encounter.
    SpendAll,
    /// Fire the fraction `c` of the remaining ammunition.
    Fractional(f64),
}

impl Policy {
    pub fn closed_form() -> Self {
        Policy::ClosedForm { fallback: None }
    }

    pub fn fractional(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(BomberError::domain(format!(
                "fraction must lie in [0, 1], got {c}"
            )));
        }
        Ok(Policy::Fractional(c))
    }

    pub fn name(&self) -> String {
        match self {
            Policy::ClosedForm { .. } => "closed-form".into(),
            Policy::GridInterpolated(_) => "grid".into(),
            Policy::SpendAll => "spend-all".into(),
            Policy::Fractional(c) => format!("fractional:{c}"),
        }
    }

    /// Raw allocation, before clamping to `[0, x]`.
    pub fn allocate(&self, s: State, params: &ModelParams) -> Result<f64> {
        match self {
            Policy::ClosedForm { fallback } => {
                if s.t == 0.0 || classify_region(s, params)?.has_closed_form() {
                    closed_form_k(s, params)
                } else if let Some(grid) = fallback {
                    grid.numeric_k(s)
                } else {
                    closed_form_k(s, params)
                }
            }
            Policy::GridInterpolated(grid) => grid.numeric_k(s),
            Policy::SpendAll => Ok(s.x),
            Policy::Fractional(c) => Ok(c * s.x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_runs: u64,
    pub seed: u64,
    pub n_streams: u64,
}

impl SimConfig {
    pub fn new(n_runs: u64, seed: u64, n_streams: u64) -> Result<Self> {
        let cfg = SimConfig {
            n_runs,
            seed,
            n_streams,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 1 || self.n_streams < 1 {
            return Err(BomberError::Config(format!(
                "need n_runs >= 1 and n_streams >= 1, got {} and {}",
                self.n_runs, self.n_streams
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p_hat (1 - p_hat) / n_runs)`.
    pub stderr: f64,
    pub n_runs: u64,
}

/// One encounter along a simulated mission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    pub t_remaining: f64,
    pub x_before: f64,
    pub fired: f64,
    pub survived: bool,
}

/// The keystream for run `run` of stream `stream`.
pub fn run_rng(seed: u64, stream: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // 2^32 words per run; a mission uses two per encounter.
    rng.set_word_pos(u128::from(run) << 32);
    rng
}

/// Flies one mission from `s0`. Returns whether the bomber reaches its target.
pub fn simulate_mission<R: Rng + ?Sized>(
    policy: &Policy,
    s0: State,
    params: &ModelParams,
    rng: &mut R,
) -> Result<bool> {
    fly(policy, s0, params, rng, None)
}

/// Like [`simulate_mission`], also recording every encounter.
pub fn simulate_mission_traced<R: Rng + ?Sized>(
    policy: &Policy,
    s0: State,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(bool, Vec<Encounter>)> {
    let mut trace = Vec::new();
    let survived = fly(policy, s0, params, rng, Some(&mut trace))?;
    Ok((survived, trace))
}

fn fly<R: Rng + ?Sized>(
    policy: &Policy,
    s0: State,
    params: &ModelParams,
    rng: &mut R,
    mut trace: Option<&mut Vec<Encounter>>,
) -> Result<bool> {
    s0.validate()?;
    let mut x = s0.x;
    let mut t = s0.t;
    loop {
        let gap: f64 = rng.sample(Exp1);
        if gap >= t {
            return Ok(true);
        }
        t -= gap;
        let raw = policy.allocate(State { x, t }, params)?;
        let y = if (0.0..=x).contains(&raw) {
            raw
        } else {
            log::warn!(
                "policy {} returned {raw} at (x={x}, t={t}); clamping to [0, {x}]",
                policy.name()
            );
            if raw.is_nan() {
                0.0
            } else {
                raw.clamp(0.0, x)
            }
        };
        let survived = rng.random::<f64>() < params.kernel(y);
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(Encounter {
                t_remaining: t,
                x_before: x,
                fired: y,
                survived,
            });
        }
        if !survived {
            return Ok(false);
        }
        x = (x - y).max(0.0);
    }
}

/// Estimates the survival probability of `policy` from `s0` over
/// `cfg.n_runs` missions. Run `r` belongs to stream `r % n_streams`.
pub fn estimate_survival(
    policy: &Policy,
    s0: State,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    s0.validate()?;
    let survivors: u64 = (0..cfg.n_streams)
        .into_par_iter()
        .map(|stream| -> Result<u64> {
            let mut count = 0;
            let mut run = stream;
            while run < cfg.n_runs {
                let mut rng = run_rng(cfg.seed, stream, run);
                if simulate_mission(policy, s0, params, &mut rng)? {
                    count += 1;
                }
                run += cfg.n_streams;
            }
            Ok(count)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    let n = cfg.n_runs as f64;
    let p_hat = survivors as f64 / n;
    Ok(SimResult {
        p_hat,
        stderr: (p_hat * (1.0 - p_hat) / n).sqrt(),
        n_runs: cfg.n_runs,
    })
}

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use bomber_core::verify::{boundary_detect, thresholds, BoundaryEstimate};
use bomber_core::{
    boundary_f, classify_region, closed_form_k, closed_form_p, estimate_survival, run_verification,
    solve_integral_equation, GridSpec, ModelParams, Policy, Region, SimConfig, SolutionGrid, State,
    VerifyOptions,
};

use crate::args::{BoundaryArgs, EvalArgs, Format, SimulateArgs, SolveArgs, VerifyArgs};
use crate::config::{
    configure_threads, grid_spec, quadrature, require, shared, state, usage, RunConfig,
};
use crate::output::{csv_bytes, emit, json_bytes, num, Sink};
use crate::CliError;

fn region_of(s: State, params: &ModelParams) -> Result<Region, CliError> {
    Ok(classify_region(s, params)?)
}

fn boundary_or_inf(t: f64, params: &ModelParams) -> Result<f64, CliError> {
    if t == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(boundary_f(t, params)?)
    }
}

fn solve_covering(
    params: &ModelParams,
    spec: &GridSpec,
    s: State,
) -> Result<SolutionGrid, CliError> {
    if s.x > spec.x_max || s.t > spec.t_max {
        return Err(CliError::Usage(format!(
            "state (x={}, t={}) lies outside the grid [0, {}] x [0, {}]",
            s.x, s.t, spec.x_max, spec.t_max
        )));
    }
    Ok(solve_integral_equation(params, spec)?)
}

#[derive(Serialize)]
struct EvalRecord {
    x: f64,
    t: f64,
    u: f64,
    region: &'static str,
    f: f64,
    k: f64,
    p: f64,
    source: &'static str,
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let sh = shared(&a.common, &cfg, Format::Text)?;
    let s = state(a.x, a.t, &cfg)?;
    let quad = quadrature(&a.grid, &cfg)?;
    let spec = if a.numeric || cfg.numeric.unwrap_or(false) {
        Some(grid_spec(&a.grid, &cfg, GridSpec::default())?)
    } else {
        None
    };
    configure_threads()?;

    let params = &sh.params;
    let region = region_of(s, params)?;
    let f = boundary_or_inf(s.t, params)?;
    let (k, p, source) = match spec {
        Some(spec) => {
            let grid = solve_covering(params, &spec, s)?;
            (grid.numeric_k(s)?, grid.numeric_p(s)?, "grid")
        }
        None if !region.has_closed_form() => return Err(CliError::NoClosedForm(s)),
        None => (
            closed_form_k(s, params)?,
            closed_form_p(s, params, &quad)?,
            "closed-form",
        ),
    };
    let rec = EvalRecord {
        x: s.x,
        t: s.t,
        u: params.u(),
        region: region.as_str(),
        f,
        k,
        p,
        source,
    };
    let payload = match sh.format {
        Format::Text => format!(
            "region={} f={} K={} P={} x={} t={} u={} source={}\n",
            rec.region, rec.f, rec.k, rec.p, rec.x, rec.t, rec.u, rec.source
        )
        .into_bytes(),
        Format::Json => json_bytes(&rec)?,
        Format::Csv => csv_bytes([
            ["x", "t", "u", "region", "f", "k", "p", "source"].map(String::from),
            [
                num(rec.x),
                num(rec.t),
                num(rec.u),
                rec.region.into(),
                num(rec.f),
                num(rec.k),
                num(rec.p),
                rec.source.into(),
            ],
        ])?,
    };
    Ok(emit(sh.out.as_deref(), &payload)?)
}

/// Indices `0, step, 2 step, ...` plus the last index.
fn thinned(n: usize, step: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx
}

#[derive(Serialize)]
struct GridRow {
    x: f64,
    t: f64,
    region: &'static str,
    pbar: f64,
    p: f64,
    kstar: f64,
}

#[derive(Serialize)]
struct GridHeader<'a> {
    u: f64,
    spec: &'a GridSpec,
    every: usize,
}

pub fn solve(a: &SolveArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let sh = shared(&a.common, &cfg, Format::Csv)?;
    let spec = grid_spec(&a.grid, &cfg, GridSpec::default())?;
    let every = a.every.or(cfg.every).unwrap_or(1);
    if every == 0 {
        return Err(CliError::Usage("--every must be at least 1".into()));
    }
    if sh.format == Format::Text {
        return Err(CliError::Usage("solve writes csv or json".into()));
    }
    configure_threads()?;

    let params = &sh.params;
    let grid = solve_integral_equation(params, &spec)?;
    let xs = thinned(spec.nx, every);
    let ts = thinned(spec.nt, every);
    let row = |i: usize, j: usize| -> Result<GridRow, CliError> {
        let (x, t) = (grid.x(i), grid.t(j));
        Ok(GridRow {
            x,
            t,
            region: region_of(State { x, t }, params)?.as_str(),
            pbar: grid.pbar_at(i, j),
            p: grid.p_at(i, j),
            kstar: grid.kstar_at(i, j),
        })
    };

    let mut sink = Sink::open(sh.out.as_deref())?;
    match sh.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut sink);
            w.write_record(["x", "t", "region", "pbar", "p", "kstar"])?;
            for &j in &ts {
                for &i in &xs {
                    let r = row(i, j)?;
                    w.write_record([
                        num(r.x),
                        num(r.t),
                        r.region.into(),
                        num(r.pbar),
                        num(r.p),
                        num(r.kstar),
                    ])?;
                }
            }
            w.flush()?;
        }
        _ => {
            let header = serde_json::to_string(&GridHeader {
                u: params.u(),
                spec: &spec,
                every,
            })?;
            // Stream the rows so large grids never sit in memory as JSON.
            write!(sink, "{},\"rows\":[", &header[..header.len() - 1])?;
            let mut first = true;
            for &j in &ts {
                for &i in &xs {
                    if !first {
                        sink.write_all(b",")?;
                    }
                    first = false;
                    serde_json::to_writer(&mut sink, &row(i, j)?)?;
                }
            }
            sink.write_all(b"]}\n")?;
        }
    }
    Ok(sink.finish()?)
}

pub fn boundary(a: &BoundaryArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let sh = shared(&a.common, &cfg, Format::Csv)?;
    let spec = grid_spec(&a.grid, &cfg, GridSpec::default())?;
    let times = if !a.t.is_empty() {
        a.t.clone()
    } else if cfg.t.is_some() {
        cfg.times()
    } else {
        thresholds::BOUNDARY_TIMES.to_vec()
    };
    if let Some(&bad) = times.iter().find(|&&t| !(t > 0.0 && t <= spec.t_max)) {
        return Err(CliError::Usage(format!(
            "--t must lie in (0, t_max = {}], got {bad}",
            spec.t_max
        )));
    }
    let tol = a.tol.or(cfg.tol).unwrap_or(0.5 * spec.dx());
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(CliError::Usage(format!(
            "--tol must be finite and nonnegative, got {tol}"
        )));
    }
    configure_threads()?;

    let grid = solve_integral_equation(&sh.params, &spec)?;
    let estimates = times
        .iter()
        .map(|&t| boundary_detect(&grid, t, tol))
        .collect::<Result<Vec<BoundaryEstimate>, _>>()?;
    let payload = match sh.format {
        Format::Csv => csv_bytes(
            std::iter::once(["t", "x_detected", "x_analytic", "gap"].map(String::from)).chain(
                estimates
                    .iter()
                    .map(|e| [num(e.t), num(e.x_detected), num(e.x_analytic), num(e.gap)]),
            ),
        )?,
        Format::Json => json_bytes(&estimates)?,
        Format::Text => estimates
            .iter()
            .map(|e| {
                format!(
                    "t={} x_detected={} x_analytic={} gap={}\n",
                    e.t, e.x_detected, e.x_analytic, e.gap
                )
            })
            .collect::<String>()
            .into_bytes(),
    };
    Ok(emit(sh.out.as_deref(), &payload)?)
}

pub fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let sh = shared(&a.common, &cfg, Format::Text)?;
    let quick = a.quick || cfg.quick.unwrap_or(false);
    let mut opts = VerifyOptions::new(quick, a.seed.or(cfg.seed).unwrap_or(1));
    opts.grid = grid_spec(&a.grid, &cfg, opts.grid)?;
    opts.quad = quadrature(&a.grid, &cfg)?;
    configure_threads()?;

    let report = run_verification(&sh.params, &opts)?;
    let payload = match sh.format {
        Format::Text => format!("{report}\n").into_bytes(),
        Format::Json => json_bytes(&report)?,
        Format::Csv => csv_bytes(
            std::iter::once(["name", "passed", "metric", "threshold", "detail"].map(String::from))
                .chain(report.checks.iter().map(|c| {
                    [
                        c.name.clone(),
                        c.passed.to_string(),
                        num(c.metric),
                        num(c.threshold),
                        c.detail.clone(),
                    ]
                })),
        )?,
    };
    emit(sh.out.as_deref(), &payload)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

enum PolicyChoice {
    ClosedForm,
    Grid,
    SpendAll,
    Fractional(f64),
}

fn parse_policy(raw: &str) -> Result<PolicyChoice, CliError> {
    match raw {
        "closed-form" => Ok(PolicyChoice::ClosedForm),
        "grid" => Ok(PolicyChoice::Grid),
        "spend-all" => Ok(PolicyChoice::SpendAll),
        other => {
            let c = other
                .strip_prefix("fractional:")
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown policy '{other}' (closed-form, grid, spend-all, fractional:<c>)"
                    ))
                })?;
            Policy::fractional(c).map_err(usage)?;
            Ok(PolicyChoice::Fractional(c))
        }
    }
}

#[derive(Serialize)]
struct SimRecord {
    policy: String,
    x: f64,
    t: f64,
    u: f64,
    n_runs: u64,
    seed: u64,
    p_hat: f64,
    stderr: f64,
    #[serde(rename = "analytic_P")]
    analytic_p: Option<f64>,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let sh = shared(&a.common, &cfg, Format::Csv)?;
    let s = state(a.x, a.t, &cfg)?;
    let quad = quadrature(&a.grid, &cfg)?;
    let raw_policy = a.policy.clone().or_else(|| cfg.policy.clone());
    let choice = parse_policy(raw_policy.as_deref().unwrap_or("closed-form"))?;
    let sim = SimConfig::new(
        a.n_runs.or(cfg.n_runs).unwrap_or(100_000),
        a.seed.or(cfg.seed).unwrap_or(1),
        a.n_streams.or(cfg.n_streams).unwrap_or(8),
    )
    .map_err(usage)?;
    let numeric = a.numeric || cfg.numeric.unwrap_or(false);
    let needs_grid = matches!(choice, PolicyChoice::Grid)
        || (numeric && matches!(choice, PolicyChoice::ClosedForm));
    let spec = if needs_grid {
        Some(grid_spec(&a.grid, &cfg, GridSpec::default())?)
    } else {
        None
    };
    configure_threads()?;

    let params = &sh.params;
    let grid = spec
        .map(|spec| solve_covering(params, &spec, s).map(Arc::new))
        .transpose()?;
    let policy = match choice {
        PolicyChoice::ClosedForm => Policy::ClosedForm { fallback: grid },
        PolicyChoice::Grid => Policy::GridInterpolated(require(grid, "grid")?),
        PolicyChoice::SpendAll => Policy::SpendAll,
        PolicyChoice::Fractional(c) => Policy::fractional(c)?,
    };
    let result = estimate_survival(&policy, s, params, &sim)?;
    let analytic_p = if region_of(s, params)?.has_closed_form() {
        Some(closed_form_p(s, params, &quad)?)
    } else {
        None
    };
    let rec = SimRecord {
        policy: policy.name(),
        x: s.x,
        t: s.t,
        u: params.u(),
        n_runs: result.n_runs,
        seed: sim.seed,
        p_hat: result.p_hat,
        stderr: result.stderr,
        analytic_p,
    };
    let payload = match sh.format {
        Format::Csv => csv_bytes([
            [
                "policy",
                "x",
                "t",
                "u",
                "n_runs",
                "seed",
                "p_hat",
                "stderr",
                "analytic_P",
            ]
            .map(String::from),
            [
                rec.policy.clone(),
                num(rec.x),
                num(rec.t),
                num(rec.u),
                rec.n_runs.to_string(),
                rec.seed.to_string(),
                num(rec.p_hat),
                num(rec.stderr),
                rec.analytic_p.map(num).unwrap_or_default(),
            ],
        ])?,
        Format::Json => json_bytes(&rec)?,
        Format::Text => format!(
            "policy={} x={} t={} u={} n_runs={} seed={} p_hat={} stderr={} analytic_P={}\n",
            rec.policy,
            rec.x,
            rec.t,
            rec.u,
            rec.n_runs,
            rec.seed,
            rec.p_hat,
            rec.stderr,
            rec.analytic_p
                .map_or_else(|| "undefined".to_string(), |p| p.to_string())
        )
        .into_bytes(),
    };
    Ok(emit(sh.out.as_deref(), &payload)?)
}

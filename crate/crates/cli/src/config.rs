//! Flag, config-file and default resolution. Flags win over the file, the file
//! wins over built-in defaults, and everything is validated before any work
//! starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use bomber_core::{GridSpec, ModelParams, QuadratureConfig, Scheme, State};

use crate::args::{CommonArgs, Format, GridArgs};
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub u: Option<f64>,
    pub x: Option<f64>,
    pub t: Option<OneOrMany>,
    pub x_max: Option<f64>,
    pub t_max: Option<f64>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub scheme: Option<Scheme>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
    pub seed: Option<u64>,
    pub n_runs: Option<u64>,
    pub n_streams: Option<u64>,
    pub policy: Option<String>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub every: Option<usize>,
    pub tol: Option<f64>,
    pub quick: Option<bool>,
    pub numeric: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn times(&self) -> Vec<f64> {
        self.t.clone().map(OneOrMany::into_vec).unwrap_or_default()
    }

    /// The single `t` of a config file, if it holds exactly one.
    pub fn single_t(&self) -> Result<Option<f64>, CliError> {
        match self.times().as_slice() {
            [] => Ok(None),
            [t] => Ok(Some(*t)),
            _ => Err(CliError::Usage(
                "config gives several t values; this command takes one".into(),
            )),
        }
    }
}

pub fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

pub struct Shared {
    pub params: ModelParams,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub fn shared(
    common: &CommonArgs,
    cfg: &RunConfig,
    default_format: Format,
) -> Result<Shared, CliError> {
    let u = require(common.u.or(cfg.u), "u")?;
    Ok(Shared {
        params: ModelParams::new(u).map_err(usage)?,
        format: common.format.or(cfg.format).unwrap_or(default_format),
        out: common.out.clone().or_else(|| cfg.out.clone()),
    })
}

pub fn grid_spec(flags: &GridArgs, cfg: &RunConfig, base: GridSpec) -> Result<GridSpec, CliError> {
    let scheme = match &flags.scheme {
        Some(s) => s.parse::<Scheme>().map_err(usage)?,
        None => cfg.scheme.unwrap_or(base.scheme),
    };
    let spec = GridSpec {
        x_max: flags.x_max.or(cfg.x_max).unwrap_or(base.x_max),
        t_max: flags.t_max.or(cfg.t_max).unwrap_or(base.t_max),
        nx: flags.nx.or(cfg.nx).unwrap_or(base.nx),
        nt: flags.nt.or(cfg.nt).unwrap_or(base.nt),
        scheme,
        interpolation: base.interpolation,
    };
    spec.validate().map_err(usage)?;
    Ok(spec)
}

pub fn quadrature(flags: &GridArgs, cfg: &RunConfig) -> Result<QuadratureConfig, CliError> {
    let base = QuadratureConfig::default();
    QuadratureConfig::new(
        flags.abs_tol.or(cfg.abs_tol).unwrap_or(base.abs_tol),
        flags.rel_tol.or(cfg.rel_tol).unwrap_or(base.rel_tol),
        cfg.max_subdivisions.unwrap_or(base.max_subdivisions),
    )
    .map_err(usage)
}

pub fn state(x: Option<f64>, t: Option<f64>, cfg: &RunConfig) -> Result<State, CliError> {
    let x = require(x.or(cfg.x), "x")?;
    let t = require(t.or(cfg.single_t()?), "t")?;
    State::new(x, t).map_err(usage)
}

/// Applies `BOMBER_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("BOMBER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "BOMBER_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(usage)
}

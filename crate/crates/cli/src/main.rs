//! `bomber`: evaluate, solve, verify and simulate the continuous Bomber
//! Problem from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 domain error, 3 failed verification.

mod args;
mod commands;
mod config;
mod output;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use bomber_core::{BomberError, State};

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(std::io::Error),
    Domain(BomberError),
    NoClosedForm(State),
    VerificationFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Domain(_) | CliError::NoClosedForm(_) => 2,
            CliError::VerificationFailed => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::NoClosedForm(s) => write!(
                f,
                "no closed form outside R2 (x={}, t={}); pass --numeric to use a solved grid",
                s.x, s.t
            ),
            CliError::VerificationFailed => write!(f, "verification failed"),
        }
    }
}

impl From<BomberError> for CliError {
    fn from(e: BomberError) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Solve(a) => commands::solve(a),
        Command::Boundary(a) => commands::boundary(a),
        Command::Verify(a) => commands::verify(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

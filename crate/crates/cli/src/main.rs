//! `mslab`: batch driver for the minimal-graph laboratory.

mod commands;
mod config;
mod output;
mod svg;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use serde_json::json;

/// Experiments on the Dirichlet problem for the minimal surface system:
/// bound curves, discrete solves, homotopy invariants and mass checks.
#[derive(Debug, Parser)]
#[command(name = "mslab", version, about)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upper and lower mass bounds and their crossing R*.
    Bounds(commands::BoundsArgs),
    /// Discrete area minimisation at one scaling R.
    Solve(commands::SolveArgs),
    /// Warm-started solves along an increasing R schedule.
    Continue(commands::ContinueArgs),
    /// Brouwer degree or Hopf invariant of a sphere map.
    Invariant(commands::InvariantArgs),
    /// Density ratios of a fixture graph about a point.
    Density(commands::DensityArgs),
    /// Direct graph mass against the boundary mass formula.
    MassCheck(commands::MassCheckArgs),
    /// Residual of cone candidates over a range of angles.
    ConeScan(commands::ConeScanArgs),
    /// Reach estimate of the image of a map.
    Reach(commands::ReachArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mslab::Error),
    /// A completed run whose numbers fail a check; artifacts are written.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_usage() || matches!(e, mslab::Error::Io(_)) => 2,
            CliError::Core(e) if e.is_resolution() => 4,
            CliError::Core(_) | CliError::Check(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) if e.is_usage() => "usage",
            CliError::Core(mslab::Error::Io(_)) => "io",
            CliError::Core(e) if e.is_resolution() => "resolution",
            CliError::Core(_) => "numerical",
            CliError::Check(_) => "check_failed",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Check(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<mslab::Error> for CliError {
    fn from(e: mslab::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Bounds(a) => commands::bounds(a),
        Command::Solve(a) => commands::solve(a),
        Command::Continue(a) => commands::continue_(a),
        Command::Invariant(a) => commands::invariant(a),
        Command::Density(a) => commands::density(a),
        Command::MassCheck(a) => commands::mass_check(a),
        Command::ConeScan(a) => commands::cone_scan(a),
        Command::Reach(a) => commands::reach(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

/// One JSON line on stderr, then the mapped exit code.
fn fail(e: &CliError) -> ExitCode {
    let code = e.exit_code();
    let line = json!({ "error": e.kind(), "exit_code": code, "message": e.message() });
    eprintln!("{line}");
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(mslab::Error::InvalidInput("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(mslab::Error::Io("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(mslab::Error::Numerical("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(mslab::Error::NoCrossing("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(mslab::Error::Resolution("x".into())).exit_code(), 4);
        assert_eq!(CliError::Core(mslab::Error::Chaining("x".into())).exit_code(), 4);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

mod args;
mod config;
mod embed;
mod error;
mod export;
mod replay;
mod run;

use clap::{CommandFactory, FromArgMatches};
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn parse() -> Result<Cli, CliError> {
    let argv: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let mut cmd = Cli::command();
    if let Some(path) = config::locate(&argv) {
        cmd = config::with_file_defaults(cmd, &path)?;
    }
    let matches = cmd.try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    Cli::from_arg_matches(&matches).map_err(|e| CliError::config(e.to_string()))
}

fn main() {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("vandal-sentinel: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    let name = cli.command.name();
    if let Err(e) = run::run(cli) {
        eprintln!("vandal-sentinel {name}: {} ({})", e.message, e.kind);
        std::process::exit(e.exit_code());
    }
}

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::{CmdResult, Failure, EXIT_OTHER};
use crate::config::RunConfig;

fn run(cli: Cli) -> CmdResult {
    let config = RunConfig::resolve(cli.config.as_deref(), &cli.overrides).map_err(|error| Failure {
        code: EXIT_OTHER,
        error,
    })?;
    match &cli.command {
        Command::Ingest { manifest } => commands::cmd_ingest(&config, manifest),
        Command::Train => commands::cmd_train(&config),
        Command::Eval { checkpoint, split } => commands::cmd_eval(&config, &cli.overrides, checkpoint, *split),
        Command::Forecast { checkpoint, origin } => commands::cmd_forecast(&config, &cli.overrides, checkpoint, *origin),
        Command::AblateWindow {
            windows,
            tasks,
            horizons,
        } => commands::cmd_ablate_window(&config, windows, tasks, horizons),
        Command::ExportSeries { columns } => commands::cmd_export_series(&config, columns),
        Command::Synth { kind, weeks } => commands::cmd_synth(&config, *kind, *weeks),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_OTHER as u8),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code as u8)
        }
    }
}

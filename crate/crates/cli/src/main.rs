mod args;
mod commands;
mod config;
mod error;
mod manifest;
mod tables;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::args::Cli;
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_inputs, digest_outputs, RunManifest};

fn run(cli: Cli) -> CliResult<()> {
    let mut cmd = cli.command;
    commands::absolutize(&mut cmd)?;
    let config = match commands::config_path(&cmd) {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let start = Instant::now();
    let outcome = commands::execute(&cmd, config.as_deref())?;
    if let Some(dir) = &outcome.out_dir {
        let manifest = RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: cmd,
            config,
            seed: outcome.seed,
            inputs: digest_inputs(&outcome.inputs)?,
            outputs: digest_outputs(dir, &outcome.outputs)?,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        manifest.write(dir)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("herald: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

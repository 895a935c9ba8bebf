//! `phylocp`: simulate datasets, infer change-points, diagnose chains and
//! benchmark evidence estimates.

mod args;
mod commands;
mod failure;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::{Failure, Outcome};

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Infer(a) => commands::infer(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Bench(a) => commands::bench(a),
        Command::Presets(a) => commands::list_presets(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phylocp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

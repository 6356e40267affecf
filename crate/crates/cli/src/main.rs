mod commands;
mod config;
mod output;

use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use commands::Failure;
use config::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let env_out = std::env::var_os(config::OUT_ENV).filter(|v| !v.is_empty()).map(Into::into);
    let outcome = config::resolve(cli, env_out).map_err(Failure::Usage).and_then(|run| {
        std::fs::create_dir_all(&run.out)
            .with_context(|| format!("cannot create output directory {}", run.out.display()))
            .map_err(Failure::Usage)?;
        match run.command {
            Command::Solve => commands::solve(&run),
            Command::Sweep => commands::sweep(&run),
            Command::Baseline => commands::baseline(&run),
            Command::Verify => commands::verify(&run),
        }
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

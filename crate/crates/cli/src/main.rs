mod args;
mod commands;

use std::process::ExitCode;

use cce_core::CceError;
use clap::Parser;

use args::{Cli, Command};

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CceError::InvalidInput(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::LearnBank(a) => commands::learn_bank(a, cli.seed),
        Command::Explain(a) => commands::explain(a),
        Command::ExplainBatch(a) => commands::explain_batch(a),
        Command::BaselineCss(a) => commands::baseline(a, true),
        Command::BaselineUnivariate(a) => commands::baseline(a, false),
        Command::GenScenario(a) => commands::gen_scenario(a, cli.seed),
        Command::RunSuite(a) => commands::run_suite(a, cli.seed),
        Command::ExportReport(a) => commands::export_report(a),
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CceError>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

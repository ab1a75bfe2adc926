use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use wavedamp::cli::{apply_overrides, run_command, Cli, ScenarioConfig};

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global().context("configuring worker threads")?;
    }
    let path = cli.config.as_ref().context("--config PATH is required")?;
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    apply_overrides(&mut cfg, cli.seed, cli.norms.as_deref())?;
    let outcome = run_command(cli.command, &cfg, &cli.out)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a certification check failed; see the report for the failing condition");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

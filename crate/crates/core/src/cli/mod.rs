//! Scenario-driven front end shared by the `wavedamp` binary and the tests.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_decay, cmd_hypotheses, cmd_iss, cmd_sign, cmd_simulate, cmd_slow, cmd_two_boundary, read_profiles, Outcome,
};
pub use config::{
    profile_from_tag, random_profile, DecaySpec, DisturbanceSpec, HypothesesConfig, InitialSpec, IssConfig, MapSpec,
    ProfileLine, ScenarioConfig, SlowConfig, TwoBoundaryConfig, SCHEMA,
};
pub use output::{save_json, save_ndjson, write_atomic, Table};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "wavedamp", version, about = "Exact simulation of the wave equation with set-valued boundary damping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario config (JSON, schema "wavedamp/v1").
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for cell sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides the config norm list, e.g. `1,2,inf`.
    #[arg(long, global = true)]
    pub norms: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    Simulate,
    Decay,
    Hypotheses,
    Slow,
    Sign,
    Iss,
    TwoBoundary,
}

/// Applies the command-line overrides to a loaded config.
pub fn apply_overrides(cfg: &mut ScenarioConfig, seed: Option<u64>, norms: Option<&str>) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = norms {
        cfg.norms = n.to_string();
    }
    cfg.validate()
}

pub fn run_command(command: Command, cfg: &ScenarioConfig, out: &std::path::Path) -> Result<Outcome> {
    match command {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Decay => cmd_decay(cfg, out),
        Command::Hypotheses => cmd_hypotheses(cfg, out),
        Command::Slow => cmd_slow(cfg, out),
        Command::Sign => cmd_sign(cfg, out),
        Command::Iss => cmd_iss(cfg, out),
        Command::TwoBoundary => cmd_two_boundary(cfg, out),
    }
}

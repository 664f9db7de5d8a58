//! Batch front end for the epoch-emotion pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod report;
pub mod wav;

use std::path::PathBuf;

use anyhow::{Context, Result};

use args::Command;
use config::PipelineConfig;

/// Result of a command that may skip individual items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub processed: usize,
    pub failures: usize,
}

/// Defaults, then the config file (explicit or from the environment), then
/// `key = literal` overrides; validated.
pub fn effective_config(path: Option<PathBuf>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut cfg = match config::resolve_path(path) {
        Some(p) => PipelineConfig::load(&p)?,
        None => PipelineConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

pub fn run(command: Command, cfg: &PipelineConfig) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    pool.install(|| match command {
        Command::Synth(a) => commands::synth(&a, cfg),
        Command::Extract(a) => commands::extract(&a, cfg),
        Command::Train(a) => commands::train(&a, cfg),
        Command::Eval(a) => commands::eval(&a, cfg),
        Command::Xval(a) => commands::xval(&a, cfg),
        Command::DumpConfig(a) => commands::dump_config(&a, cfg),
    })
}

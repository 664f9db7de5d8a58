use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::CONFIG_ENV;

/// Epoch-based speech emotion recognition.
///
/// Every configuration key is also a flag: `--classifier.lda-dim 40`,
/// `--extract.vad.threshold 0.1`, `--classifier.mlp.hidden "[64, 64]"`.
/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Parser)]
#[command(name = "epoch-emotion", version)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// More log output (repeat for debug); RUST_LOG also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a WAV with ground-truth glottal closure instants, or a
    /// whole emotion corpus with its manifest.
    Synth(SynthArgs),
    /// Voicing, epochs and MFCC/EPOCH/combined features for WAV files.
    Extract(ExtractArgs),
    /// Train an emotion model from a manifest of feature files.
    Train(TrainArgs),
    /// Decode a manifest with a trained model and score it.
    Eval(EvalArgs),
    /// Leave-one-speaker-out cross-validation over a manifest.
    Xval(XvalArgs),
    /// Print the effective configuration as TOML.
    DumpConfig(DumpConfigArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output WAV; the ground truth goes next to it as `<stem>.gci.csv`.
    #[arg(long, required_unless_present = "corpus", conflicts_with = "corpus")]
    pub out: Option<PathBuf>,
    /// Write a `[corpus]`-configured emotion corpus and `manifest.csv` here.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// TOML file holding a full synthesis spec.
    #[arg(long, conflicts_with = "corpus")]
    pub spec: Option<PathBuf>,
    /// angry, happy, neutral or sad.
    #[arg(long, conflicts_with_all = ["corpus", "spec"])]
    pub preset: Option<String>,
    #[arg(long, conflicts_with = "corpus")]
    pub f0: Option<f64>,
    /// End of a linear f0 glide starting at `--f0`.
    #[arg(long, requires = "f0", conflicts_with = "corpus")]
    pub f0_end: Option<f64>,
    /// Voiced duration in seconds.
    #[arg(long, conflicts_with = "corpus")]
    pub duration: Option<f64>,
    #[arg(long, conflicts_with = "corpus")]
    pub jitter_pct: Option<f64>,
    #[arg(long, conflicts_with = "corpus")]
    pub shimmer_pct: Option<f64>,
    #[arg(long, conflicts_with = "corpus")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// A WAV file, a directory of WAV files or a manifest CSV of WAV files.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write evidence, SPH and pitch contours as `x,y` CSV.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest of feature files (`path,emotion,speaker`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model output; the training log goes to `<model>.log.csv`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for `metrics.jsonl` and `confusion.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct XvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for `folds.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpConfigArgs {
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

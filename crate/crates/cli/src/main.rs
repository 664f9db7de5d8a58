use std::process::ExitCode;

use clap::{Arg, CommandFactory, FromArgMatches};
use epoch_emotion_cli::args::Cli;
use epoch_emotion_cli::config::PipelineConfig;
use epoch_emotion_cli::{report, run};

fn main() -> ExitCode {
    let mut command = Cli::command();
    let keys = PipelineConfig::leaf_keys();
    for key in &keys {
        command = command.arg(
            Arg::new(format!("config:{key}"))
                .long(key.clone())
                .value_name("VALUE")
                .global(true)
                .help_heading("Configuration keys"),
        );
    }
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let overrides: Vec<(String, String)> = keys
        .iter()
        .filter_map(|k| matches.get_one::<String>(&format!("config:{k}")).map(|v| (k.clone(), v.clone())))
        .collect();
    let config = match epoch_emotion_cli::effective_config(cli.config.clone(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            report::fatal(&e);
            return ExitCode::from(2);
        }
    };
    match run(cli.command, &config) {
        Ok(outcome) if outcome.failures == 0 => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            report::fatal(&e);
            ExitCode::from(1)
        }
    }
}

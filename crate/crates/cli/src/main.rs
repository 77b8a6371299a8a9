use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dasf_cli::config::{ConfigError, FieldError};
use dasf_cli::{load_config, run_study, Overrides};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dasf", version, about = "Distributed adaptive signal fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo study described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Batch,
}

#[derive(Serialize)]
struct ErrorReport {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

fn fail(report: ErrorReport) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
    ExitCode::from(if report.error == "config" { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { config, seed, runs, iters, out_dir, mode } = Cli::parse().command;
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            return fail(ErrorReport { error: "io", message: format!("{}: {e}", config.display()), fields: vec![] })
        }
    };
    let overrides = Overrides {
        seed,
        runs,
        iterations: iters,
        output_dir: out_dir,
        mode: mode.map(|m| match m {
            ModeArg::Adaptive => "adaptive".into(),
            ModeArg::Batch => "batch".into(),
        }),
    };
    let mut cfg = match load_config(&text, &overrides) {
        Ok(c) => c,
        Err(ConfigError { errors }) => {
            let message = format!("{} invalid field(s)", errors.len());
            return fail(ErrorReport { error: "config", message, fields: errors });
        }
    };
    if cfg.output_dir.is_none() {
        let dir = PathBuf::from("results").join(&cfg.name);
        log::info!("experiment.output_dir not set, using {}", dir.display());
        cfg.output_dir = Some(dir);
    }
    match run_study(&cfg) {
        Ok(result) => {
            for v in &result.variants {
                log::info!(
                    "{}: {} runs, median final epsilon {:e}",
                    v.variant.label(),
                    v.runs.len(),
                    v.final_median()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(ErrorReport { error: "study", message: e.to_string(), fields: vec![] }),
    }
}

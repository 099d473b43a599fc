use std::path::PathBuf;
use std::process::ExitCode;

use bergman_core::ErrorClass;
use bergman_localize::config::{Command, ConfigError};
use bergman_localize::{run, RunOptions};
use clap::Parser;

/// Bergman kernel localization experiments.
#[derive(Debug, Parser)]
#[command(name = "bergman-localize", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Gram cache directory; overrides the environment and the config.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: number of cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    for cause in e.chain() {
        if cause.is::<ConfigError>() || cause.is::<serde_json::Error>() {
            return (2, "config");
        }
        if let Some(core) = cause.downcast_ref::<bergman_core::Error>() {
            return match core.class() {
                ErrorClass::Config => (2, "config"),
                ErrorClass::Numeric => (3, "numeric"),
                ErrorClass::Io => (4, "io"),
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<bergman_localize::report::MissingOutputs>() {
            return (4, "io");
        }
    }
    (1, "other")
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(j) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("{}", serde_json::json!({"class": "other", "message": e.to_string()}));
            return ExitCode::from(1);
        }
    }
    let options = RunOptions {
        cache: args.cache,
        out: args.out,
    };
    match run(args.command, &args.config, &options) {
        Ok(manifest) => {
            println!("{} outputs written", manifest.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, class) = classify(&e);
            let mut report = serde_json::json!({"class": class, "message": format!("{e:#}")});
            if let Some(core) = e.chain().find_map(|c| c.downcast_ref::<bergman_core::Error>()) {
                report["error"] = serde_json::Value::String(format!("{core:?}"));
            }
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}

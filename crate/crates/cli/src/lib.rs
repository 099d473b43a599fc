//! Experiment harness over `bergman-core`: JSON configs in, CSV/JSON/SVG
//! files and a run manifest out.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};

use bergman_core::cache::GramCache;

use crate::commands::Context;
use crate::config::{Command, ConfigError, ExperimentConfig};
use crate::output::{OutputDir, RunManifest};

/// Environment variable overriding the config's cache directory.
pub const CACHE_ENV: &str = "BERGMAN_LOCALIZE_CACHE";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs `command` with the config at `config_path`. Relative paths inside
/// the config are taken relative to the config file. The manifest is
/// written even when a task fails; the first task error is then returned.
pub fn run(command: Command, config_path: &Path, options: &RunOptions) -> anyhow::Result<RunManifest> {
    let (cfg, bytes) = ExperimentConfig::load(config_path)?;
    if cfg.command != command {
        return Err(ConfigError(format!(
            "config is for `{}`, invoked as `{}`",
            cfg.command.name(),
            command.name()
        ))
        .into());
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = match (&options.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(base, o),
        (None, None) => base.join("out"),
    };
    let out = OutputDir::create(&out_dir)?;

    if command == Command::Report {
        let manifests: Vec<PathBuf> = cfg.manifests.iter().flatten().map(|p| resolve(base, p)).collect();
        let mut out = out;
        report::emit_report(&manifests, &mut out)?;
        return out.finish(command.name(), &bytes);
    }

    let cache_dir = options
        .cache
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.cache_dir.as_ref().map(|c| resolve(base, c)));
    let cache = cache_dir.map(GramCache::new).transpose()?;

    let mut ctx = Context::new(&cfg, cache, out);
    let r = match command {
        Command::Kernel => commands::kernel(&mut ctx),
        Command::Metric => commands::metric(&mut ctx),
        Command::PeakCheck => commands::peak_check(&mut ctx),
        Command::Extend => commands::extend(&mut ctx),
        Command::Localize => commands::localize(&mut ctx),
        Command::Report => unreachable!(),
    };
    let (out, task_err) = ctx.finish();
    r?;
    let manifest = out.finish(command.name(), &bytes)?;
    match task_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

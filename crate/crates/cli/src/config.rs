//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use bergman_core::domain::{DomainFamily, DomainSpec, FamilyKind};
use bergman_core::{Complex64, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version of the config, CSV and JSON formats written by this tool.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn missing(field: &str, command: Command) -> ConfigError {
    ConfigError(format!("missing field `{field}` (required by `{}`)", command.name()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Kernel,
    Metric,
    PeakCheck,
    Extend,
    Localize,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Metric => "metric",
            Command::PeakCheck => "peak-check",
            Command::Extend => "extend",
            Command::Localize => "localize",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Ball { n: usize },
    Ellipsoid { weights: Vec<f64> },
    PerturbedDisc { tau: f64, m: u32 },
}

impl DomainConfig {
    pub fn build(&self) -> Result<DomainSpec, ConfigError> {
        let spec = match self {
            DomainConfig::Ball { n } => {
                if *n == 0 {
                    return Err(ConfigError("domain.n must be positive".into()));
                }
                Ok(DomainSpec::ball(*n))
            }
            DomainConfig::Ellipsoid { weights } => DomainSpec::ellipsoid(weights),
            DomainConfig::PerturbedDisc { tau, m } => DomainSpec::perturbed_disc(*tau, *m),
        };
        spec.map_err(|e| ConfigError(format!("domain: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub base: FamilyKind,
    /// Parameter values of the members.
    pub t_values: Vec<f64>,
}

impl FamilyConfig {
    pub fn build(&self) -> Result<(DomainFamily, Vec<DomainSpec>), ConfigError> {
        if self.t_values.is_empty() {
            return Err(ConfigError("family.t_values is empty".into()));
        }
        let lo = self.t_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.t_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let fam = DomainFamily::new(self.base.clone(), lo, hi).map_err(|e| ConfigError(format!("family: {e}")))?;
        let members = self
            .t_values
            .iter()
            .map(|&t| fam.member(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError(format!("family: {e}")))?;
        Ok((fam, members))
    }
}

/// A point of `Cⁿ` as `[[re, im], …]`.
pub type PointConfig = Vec<[f64; 2]>;

pub fn to_point(p: &PointConfig) -> Point {
    p.iter().map(|c| Complex64::new(c[0], c[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Variational,
    Constructive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Overrides the top-level domain.
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    /// Index into the boundary points generated from `numeric.boundary_points`.
    pub zeta_index: usize,
    pub radius: f64,
    /// Inner radius; the constructive solver defaults to the largest admissible value.
    #[serde(default)]
    pub rho: Option<f64>,
    pub delta: f64,
    pub w_offset: f64,
    pub solver: Solver,
    pub degree: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    pub degree: u32,
    pub quad_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub points: Option<Vec<PointConfig>>,
    #[serde(default)]
    pub directions: Option<Vec<PointConfig>>,
    /// Number of boundary points per member.
    #[serde(default)]
    pub boundary_points: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub offsets: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub eta1: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub normalized: Option<bool>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub local_count: Option<usize>,
    #[serde(default)]
    pub relax_resolution: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub command: Command,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub numeric: Option<NumericConfig>,
    #[serde(default)]
    pub problems: Option<Vec<ProblemConfig>>,
    /// Manifests merged by `report`.
    #[serde(default)]
    pub manifests: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<(ExperimentConfig, Vec<u8>)> {
        let bytes = std::fs::read(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_slice(&bytes).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ConfigError(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let c = self.command;
        if c == Command::Report {
            if self.manifests.is_none() {
                return Err(missing("manifests", c));
            }
            return Ok(());
        }
        let num = self.numeric.as_ref().ok_or_else(|| missing("numeric", c))?;
        if num.quad_count == 0 {
            return Err(ConfigError("numeric.quad_count must be positive".into()));
        }
        match c {
            Command::Kernel | Command::Metric => {
                self.domain.as_ref().ok_or_else(|| missing("domain", c))?;
                num.points.as_ref().ok_or_else(|| missing("numeric.points", c))?;
                if c == Command::Metric {
                    num.directions.as_ref().ok_or_else(|| missing("numeric.directions", c))?;
                }
            }
            Command::PeakCheck | Command::Localize => {
                if self.domain.is_none() && self.family.is_none() {
                    return Err(missing("family", c));
                }
                num.boundary_points.ok_or_else(|| missing("numeric.boundary_points", c))?;
                if c == Command::PeakCheck {
                    num.eta1.ok_or_else(|| missing("numeric.eta1", c))?;
                    num.samples.ok_or_else(|| missing("numeric.samples", c))?;
                } else {
                    let r = num.radius.ok_or_else(|| missing("numeric.radius", c))?;
                    if !(r > 0.0) {
                        return Err(ConfigError("numeric.radius must be positive".into()));
                    }
                    num.epsilons.as_ref().ok_or_else(|| missing("numeric.epsilons", c))?;
                }
            }
            Command::Extend => {
                if self.domain.is_none() && self.problems.iter().flatten().any(|p| p.domain.is_none()) {
                    return Err(missing("domain", c));
                }
                self.problems.as_ref().ok_or_else(|| missing("problems", c))?;
                num.boundary_points.ok_or_else(|| missing("numeric.boundary_points", c))?;
            }
            Command::Report => unreachable!(),
        }
        Ok(())
    }

    pub fn numeric(&self) -> &NumericConfig {
        self.numeric.as_ref().expect("validated config has a numeric block")
    }

    /// Members under study: the family members, or the single domain.
    pub fn members(&self) -> Result<Vec<DomainSpec>, ConfigError> {
        match (&self.family, &self.domain) {
            (Some(f), _) => Ok(f.build()?.1),
            (None, Some(d)) => Ok(vec![d.build()?]),
            (None, None) => Err(ConfigError("neither `family` nor `domain` given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_degree_is_named() {
        let text = r#"{"format_version": 1, "command": "kernel",
            "domain": {"kind": "ball", "n": 1},
            "numeric": {"quad_count": 1000, "seed": 1, "points": [[[0, 0]]]}}"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("degree"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"format_version": 1, "command": "kernel", "colour": "red",
            "numeric": {"degree": 2, "quad_count": 1000, "seed": 1}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn command_requirements() {
        let text = r#"{"format_version": 1, "command": "localize",
            "domain": {"kind": "ball", "n": 1},
            "numeric": {"degree": 2, "quad_count": 1000, "seed": 1, "boundary_points": 4, "epsilons": [0.25]}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.0.contains("numeric.radius"), "{err}");
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use hre_core::measures::TruncationGrid;
use hre_core::models::SequenceModel;
use hre_core::subsequence::{SupportMode, ThresholdRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Series,
    Heyde,
    Bounds,
    Maxterm,
    Select,
    Kpr,
    Split,
    Refine,
    Omnibus,
    Permute,
    Dyadic,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Series => "series",
            Command::Heyde => "heyde",
            Command::Bounds => "bounds",
            Command::Maxterm => "maxterm",
            Command::Select => "select",
            Command::Kpr => "kpr",
            Command::Split => "split",
            Command::Refine => "refine",
            Command::Omnibus => "omnibus",
            Command::Permute => "permute",
            Command::Dyadic => "dyadic",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A model with a display name, for commands that compare several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    pub name: String,
    pub model: SequenceModel,
}

/// Estimator and construction parameters. Each command reads the ones it
/// needs and falls back to a documented default for the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub epsilon: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub replicas: Option<u64>,
    /// Heyde horizons are `⌈horizon_scale / ε²⌉`.
    pub horizon_scale: Option<f64>,
    /// Maximal-term level divisor `c` in `max_{n≤N} |f_n| > N/c`.
    pub divisor: Option<f64>,
    /// Horizons for the Fuk–Nagaev check.
    pub horizons: Option<Vec<usize>>,
    pub stages: Option<usize>,
    /// Atom budget for exact finite realizations.
    pub space_budget: Option<usize>,
    pub l1_bound: Option<f64>,
    pub threshold: Option<ThresholdRule>,
    pub support: Option<SupportMode>,
    pub grid: Option<TruncationGrid>,
    /// Number of refinement stages with speeds `2^{-k}`.
    pub depth: Option<usize>,
    pub permutation_seed: Option<u64>,
    pub i_max: Option<usize>,
}

/// Parsed experiment file. `seed` is mandatory once command-line overrides
/// are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<SequenceModel>,
    #[serde(default)]
    pub models: Vec<NamedModel>,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks presence of the seed and positivity of every numeric
    /// parameter that was set.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::Config(
                "missing field `seed` (set it in the config or pass --seed)".into(),
            ));
        }
        let p = &self.params;
        let positive_f = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(CliError::Config(format!("`params.{name}` must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        let positive_u = |name: &str, v: Option<u64>| match v {
            Some(0) => Err(CliError::Config(format!("`params.{name}` must be positive"))),
            _ => Ok(()),
        };
        if let Some(eps) = &p.epsilon {
            if eps.is_empty() {
                return Err(CliError::Config("`params.epsilon` must not be empty".into()));
            }
            for &e in eps {
                positive_f("epsilon", Some(e))?;
            }
        }
        if let Some(h) = &p.horizons {
            if h.is_empty() || h.contains(&0) {
                return Err(CliError::Config("`params.horizons` must be positive".into()));
            }
        }
        positive_f("horizon_scale", p.horizon_scale)?;
        positive_f("divisor", p.divisor)?;
        positive_f("l1_bound", p.l1_bound)?;
        if self.workers == Some(0) {
            return Err(CliError::Config("`workers` must be positive".into()));
        }
        positive_u("n_max", p.n_max.map(|v| v as u64))?;
        positive_u("replicas", p.replicas)?;
        positive_u("stages", p.stages.map(|v| v as u64))?;
        positive_u("space_budget", p.space_budget.map(|v| v as u64))?;
        positive_u("depth", p.depth.map(|v| v as u64))?;
        if let Some(g) = p.grid {
            positive_f("grid.step", Some(g.step))?;
            positive_f("grid.max", Some(g.max))?;
        }
        if let Some(m) = &self.model {
            m.validate().map_err(|e| CliError::Config(format!("`model`: {e}")))?;
        }
        for nm in &self.models {
            nm.model
                .validate()
                .map_err(|e| CliError::Config(format!("`models` entry `{}`: {e}", nm.name)))?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn require_model(&self) -> Result<&SequenceModel, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing field `model`".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_model() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            command = "series"
            seed = 7
            [model]
            kind = "iid"
            law = { law = "gaussian", mean = 0.0, sd = 1.0 }
            [params]
            epsilon = [1.0, 0.5]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.command, Some(Command::Series));
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn missing_seed_names_the_field() {
        let cfg = ExperimentConfig::from_toml("command = \"series\"").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("`seed`"), "{err}");
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let cfg = ExperimentConfig::from_toml("seed = 1\n[params]\nepsilon = [0.5, -1.0]").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml("seed = 1\n[params]\nreplicas = 0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("seed = 1\nbogus = 3").is_err());
    }
}

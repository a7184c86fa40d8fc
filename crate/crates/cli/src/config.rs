use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sanitizer_core::{DecouplerConfig, EvalConfig, GridPoint, MechanismConfig, PrivacyBudget, SynthConfig};

use crate::error::{CliError, Result};

/// File name of the effective configuration echoed into output directories.
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fraction of rows that go to the auxiliary (decoupler training) part.
    pub aux_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { aux_fraction: 0.5 }
    }
}

/// Every section is optional; missing fields take the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: SynthConfig,
    pub split: SplitConfig,
    pub decoupler: DecouplerConfig,
    pub mechanism: MechanismConfig,
    pub budget: PrivacyBudget,
    pub eval: EvalConfig,
    pub sweep_grid: Vec<GridPoint>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Writes the effective configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(CONFIG_ECHO);
        fs::write(&path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(PipelineConfig::parse("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::parse(r#"{"decoupler": {"k": 4, "gamma": 1}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("decoupler"), "{msg}");
        assert!(msg.contains("gamma"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = PipelineConfig::parse(r#"{"decoupler": {"beta": 1.0}, "budget": {"epsilon": 2.0}}"#).unwrap();
        assert_eq!(cfg.decoupler.beta, 1.0);
        assert_eq!(cfg.decoupler.alpha, [1.0, 1.0, 100.0, 1.0]);
        assert_eq!(cfg.budget.epsilon, 2.0);
        assert_eq!(cfg.budget.mean_fraction, 0.3);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }
}

//! Experiment configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::GeneratorConfig;
use crate::error::{Error, Result};
use crate::policy::{Decoding, EnvConfig, SamplingConfig, SftConfig};
use crate::reward::RmConfig;
use crate::rl::RlConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// F1@K cut-offs; derived from the eval split when absent.
    pub ks: Option<Vec<usize>>,
    pub decoding: Decoding,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: None,
            decoding: Decoding::Sample(SamplingConfig::default()),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.as_ref().is_some_and(|ks| ks.is_empty() || ks.contains(&0)) {
            return Err(Error::Config("eval ks must be non-empty and positive".into()));
        }
        if let Decoding::Sample(s) = &self.decoding {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub generator: GeneratorConfig,
    pub env: EnvConfig,
    pub sft: SftConfig,
    pub rm: RmConfig,
    pub rl: RlConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 20240917,
            out_dir: PathBuf::from("runs/default"),
            generator: GeneratorConfig::default(),
            env: EnvConfig::default(),
            sft: SftConfig::default(),
            rm: RmConfig::default(),
            rl: RlConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.sft.validate()?;
        self.rm.validate()?;
        self.rl.validate()?;
        self.eval.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

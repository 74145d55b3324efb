//! Run configuration: one TOML document describing fleet, scenario, episode and training.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::devices::DeviceFleet;
use crate::env::{EnvConfig, DEFAULT_UNMET_PENALTY};
use crate::error::{MgError, Result};
use crate::ppo::TrainConfig;
use crate::scenario::{load_scenario, synth_scenario, Scenario, SynthConfig};

/// Where the episode's time series come from. A `path` wins over `synth`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSource {
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSettings {
    pub start: usize,
    /// Episode length in steps; the whole scenario when absent.
    pub horizon: Option<usize>,
    pub unmet_penalty: f64,
    pub initial_soc: Option<f64>,
    pub export_during_outage: bool,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            start: 0,
            horizon: None,
            unmet_penalty: DEFAULT_UNMET_PENALTY,
            initial_soc: None,
            export_during_outage: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the outage process and of training.
    pub seed: u64,
    pub fleet: DeviceFleet,
    pub scenario: ScenarioSource,
    pub env: EnvSettings,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| MgError::Schema(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MgError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            MgError::Schema(m) => MgError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MgError::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        if self.scenario.path.is_none() {
            self.scenario.synth.validate()?;
        }
        let mut train = self.train.clone();
        train.seed = self.seed;
        train.validate()?;
        if !(self.env.unmet_penalty >= 0.0) {
            return Err(MgError::InvalidConfig("env.unmet_penalty must be >= 0".into()));
        }
        Ok(())
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        match &self.scenario.path {
            Some(p) => load_scenario(p),
            None => synth_scenario(&self.scenario.synth),
        }
    }

    /// Environment for this run over `scenario`, validated.
    pub fn env_config(&self, scenario: Arc<Scenario>) -> Result<EnvConfig> {
        let mut cfg = EnvConfig::new(self.fleet.clone(), scenario, self.seed);
        cfg.start = self.env.start;
        cfg.horizon = self
            .env
            .horizon
            .unwrap_or_else(|| cfg.scenario.len().saturating_sub(self.env.start));
        cfg.unmet_penalty = self.env.unmet_penalty;
        cfg.initial_soc = self.env.initial_soc;
        cfg.export_during_outage = self.env.export_during_outage;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        t
    }
}

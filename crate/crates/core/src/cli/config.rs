//! Experiment config documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, ExperimentSettings};
use crate::error::{Error, Result};
use crate::gp::GpParams;
use crate::policy_space::GridSpec;
use crate::reward_model::{CostParams, PenaltyConfig};
use crate::sim_env::{External, ExternalAdapterConfig, ScenarioParams, Simulator, Surrogate};

/// Where outcomes come from: the built-in surrogate or a child process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Surrogate(ScenarioParams),
    External(ExternalAdapterConfig),
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self {
            ScenarioConfig::Surrogate(p) => Box::new(Surrogate::new(p.clone())?),
            ScenarioConfig::External(c) => Box::new(External::new(c.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub grid: GridSpec,
    pub agent: AgentSpec,
    #[serde(default)]
    pub gp: GpParams,
    pub iterations: usize,
    pub batch_size: usize,
    /// Required: there is no time-based fallback.
    pub master_seed: u64,
    /// Simultaneous simulations; defaults to the hardware, capped at the batch size.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub costs: CostParams,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    /// Used when no output directory is given on the command line.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            agent: self.agent.clone(),
            grid: self.grid,
            gp: self.gp,
            iterations: self.iterations,
            batch_size: self.batch_size,
            master_seed: self.master_seed,
            workers: self.workers,
            costs: self.costs,
            penalty: self.penalty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        // builds and validates the agent against the grid without keeping it
        self.agent
            .build(self.batch_size, &self.gp, crate::policy_space::discretize(&self.grid)?)?;
        Ok(())
    }
}

/// Parses a JSON document, reporting the file, line and column on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

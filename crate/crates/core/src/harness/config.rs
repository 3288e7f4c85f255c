use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{Algorithm, AgentVariant, HyperParams};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};

/// The `[agent]` section: variant keys plus every hyperparameter key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub recurrent: bool,
    #[serde(flatten)]
    pub hyper: HyperParams,
}

impl<'de> Deserialize<'de> for AgentConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let algorithm = match table.remove("algorithm") {
            Some(v) => Algorithm::deserialize(v).map_err(D::Error::custom)?,
            None => Algorithm::default(),
        };
        let recurrent = match table.remove("recurrent") {
            Some(v) => bool::deserialize(v).map_err(D::Error::custom)?,
            None => true,
        };
        let hyper = HyperParams::deserialize(toml::Value::Table(table)).map_err(D::Error::custom)?;
        Ok(Self {
            algorithm,
            recurrent,
            hyper,
        })
    }
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LhIqn,
            recurrent: true,
            hyper: HyperParams::default(),
        }
    }
}

impl AgentConfig {
    pub fn variant(&self) -> AgentVariant {
        AgentVariant::new(self.algorithm, self.recurrent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub total_steps: u64,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Rows buffered before the CSV writer is flushed.
    pub flush_period: usize,
    /// Seeds run concurrently.
    pub threads: usize,
    /// Train the two learners of a run on separate threads.
    pub parallel_learners: bool,
    /// Fill the wall_seconds column; off keeps CSVs byte-reproducible.
    pub record_wall_clock: bool,
    pub checkpoint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            eval_period: 5_000,
            eval_episodes: 20,
            final_eval_episodes: 100,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            flush_period: 1,
            threads: 1,
            parallel_learners: false,
            record_wall_clock: false,
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Input {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.hyper.validate()?;
        let run = &self.run;
        if run.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if run.eval_period == 0 || run.total_steps < run.eval_period {
            return Err(Error::Config(format!(
                "total_steps ({}) must be at least eval_period ({}) and eval_period positive",
                run.total_steps, run.eval_period
            )));
        }
        if run.eval_episodes == 0 || run.final_eval_episodes == 0 {
            return Err(Error::Config("evaluation needs at least one episode".into()));
        }
        if run.threads == 0 || run.flush_period == 0 {
            return Err(Error::Config("threads and flush_period must be positive".into()));
        }
        Ok(())
    }
}

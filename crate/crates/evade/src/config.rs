//! Experiment configuration: a TOML document whose keys mirror
//! [`ExperimentConfig`] field names, plus command-line overrides.

use std::path::{Path, PathBuf};

use evade_core::bandit::UpdateMode;
use evade_core::episode::EpisodeConfig;
use evade_core::factory::FactoryConfig;
use evade_core::learner::{NetPreset, TrainerConfig};
use evade_core::planner::{Algorithm, PlannerConfig};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EVADE_OUT_DIR";
/// Output directory used when neither `--out` nor [`OUT_DIR_ENV`] is set.
pub const DEFAULT_OUT_DIR: &str = "evade-out";

/// Everything one experiment campaign needs.
///
/// `agents` and `gamma` are authoritative: on resolution they overwrite
/// `factory.agent_count` and `trainer.gamma`, so planning and learning always
/// share one discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub evade_enabled: bool,
    pub agents: usize,
    pub horizon: usize,
    pub n_budget: usize,
    pub episodes: u64,
    pub runs: u64,
    pub gamma: f64,
    pub update_mode: UpdateMode,
    pub net: NetPreset,
    pub master_seed: u64,
    pub trainer: TrainerConfig,
    pub factory: FactoryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dice,
            evade_enabled: true,
            agents: 4,
            horizon: 4,
            n_budget: 192,
            episodes: 150,
            runs: 10,
            gamma: 0.95,
            update_mode: UpdateMode::FullReturn,
            net: NetPreset::Desk,
            master_seed: 1,
            trainer: TrainerConfig::default(),
            factory: FactoryConfig::default(),
        }
    }
}

/// Values given on the command line; `None` keeps the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub agents: Option<usize>,
    pub horizon: Option<usize>,
    pub n_budget: Option<usize>,
    pub episodes: Option<u64>,
    pub runs: Option<u64>,
    pub evade_enabled: Option<bool>,
    pub net: Option<NetPreset>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        set!(master_seed, algorithm, agents, horizon, n_budget, episodes, runs, evade_enabled, net);
    }

    /// Copies the authoritative top-level fields into the nested sections and
    /// checks every invariant.
    pub fn resolve(mut self) -> Result<Self, HarnessError> {
        self.factory.agent_count = self.agents;
        self.trainer.gamma = self.gamma;
        self.planner()?;
        self.factory.validate()?;
        self.factory.grid()?;
        self.trainer.validate()?;
        if self.runs == 0 || self.episodes == 0 {
            return Err(HarnessError::Config("runs and episodes must be positive".into()));
        }
        if self.evade_enabled && self.trainer.warmup_samples > self.trainer.replay_capacity {
            return Err(HarnessError::Config(format!(
                "warmup_samples {} exceed replay_capacity {}",
                self.trainer.warmup_samples, self.trainer.replay_capacity
            )));
        }
        Ok(self)
    }

    pub fn planner(&self) -> Result<PlannerConfig, HarnessError> {
        let mut planner = PlannerConfig::new(self.n_budget, self.horizon, self.gamma)?;
        planner.update_mode = self.update_mode;
        Ok(planner)
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig, HarnessError> {
        Ok(EpisodeConfig {
            algorithm: self.algorithm,
            planner: self.planner()?,
            factory: self.factory.clone(),
            evade: self.evade_enabled,
        })
    }
}

/// `--out`, else `$EVADE_OUT_DIR`, else [`DEFAULT_OUT_DIR`].
pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml("n_budget = 512\nevade_enabled = false\n[trainer]\nminibatch_size = 32\n").unwrap();
        assert_eq!(cfg.n_budget, 512);
        assert!(!cfg.evade_enabled);
        assert_eq!(cfg.trainer.minibatch_size, 32);
        assert_eq!(cfg.trainer.target_sync_period, 5000);
        assert_eq!(cfg.horizon, 4);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ExperimentConfig::from_toml("budget = 3").is_err());
    }

    #[test]
    fn overrides_win_and_resolution_propagates() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides {
            agents: Some(2),
            horizon: Some(6),
            ..Overrides::default()
        });
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.factory.agent_count, 2);
        assert_eq!(cfg.planner().unwrap().budget.iterations(), 32);
    }

    #[test]
    fn invalid_budget_rejected() {
        let cfg = ExperimentConfig {
            n_budget: 3,
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.resolve(), Err(HarnessError::Config(_))));
    }
}

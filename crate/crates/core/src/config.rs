//! Experiment configuration. `Default` is the full-scale setup; `desk` and
//! `toy` are reduced presets for a single machine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PalcasError, Result};
use crate::federation::FederationMode;
use crate::nn::AdamWConfig;
use crate::observe;
use crate::pdqn::{ExplorationSchedule, LearnerConfig};
use crate::reward::RewardWeights;
use crate::road::{RoadLayout, RoadNetwork};
use crate::rss::RssParams;
use crate::sim::{SimParams, SpawnConfig};

/// CAV penetration rates of the reference experiments.
pub const PENETRATION_PRESETS: [f64; 5] = [0.05, 0.10, 0.20, 0.40, 0.60];

/// Environment variable overriding [`ExperimentConfig::seed`].
pub const SEED_ENV: &str = "PALCAS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Flow-driven spawning on every entry; episodes last `episode_length`.
    Traffic,
    /// One CAV placed at the start of each episode amid flow-driven
    /// background traffic; the episode ends once the CAV is resolved.
    SingleCav { lane: u8, position: f64, speed: f64, exit_cluster: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub rounds: usize,
    /// Gradient steps each agent takes per round.
    pub local_steps: u64,
    /// Gradient steps an agent takes per environment tick once its replay
    /// buffer holds a batch.
    pub updates_per_tick: u32,
    /// Round length cap in ticks; 0 means 20 × `local_steps`.
    pub max_round_ticks: u64,
    /// Writes measured wall time to the round log instead of 0.
    pub record_wall_time: bool,
    /// Greedy episodes run after each round on a dedicated seed stream;
    /// when positive, the checkpoint is the best-scoring round's model.
    pub validation_episodes: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            local_steps: 2500,
            updates_per_tick: 1,
            max_round_ticks: 0,
            record_wall_time: false,
            validation_episodes: 0,
        }
    }
}

impl TrainingConfig {
    pub fn round_tick_cap(&self) -> u64 {
        if self.max_round_ticks == 0 {
            20 * self.local_steps
        } else {
            self.max_round_ticks
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Record a trajectory sample every this many ticks.
    pub trajectory_stride: u32,
    pub spacetime_bin_x: f64,
    pub spacetime_bin_t: f64,
    /// Write every encoded observation of the first evaluation episode.
    pub dump_observations: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { trajectory_stride: 1, spacetime_bin_x: 50.0, spacetime_bin_t: 10.0, dump_observations: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Timed decision rounds.
    pub samples: usize,
    /// CAVs placed in the benchmarked cluster.
    pub cavs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { samples: 3000, cavs: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: FederationMode,
    pub disable_priority_reward: bool,
    /// Episode length, s.
    pub episode_length: f64,
    /// Evaluation episodes.
    pub episodes: usize,
    /// Ticks each chosen action is held before the agent decides again.
    pub decision_interval: u32,
    pub scenario: Scenario,
    pub road: RoadLayout,
    pub spawn: SpawnConfig,
    pub sim: SimParams,
    pub rss: RssParams,
    pub reward: RewardWeights,
    pub learner: LearnerConfig,
    pub training: TrainingConfig,
    pub output: OutputConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: FederationMode::Fedavg,
            disable_priority_reward: false,
            episode_length: 600.0,
            episodes: 20,
            decision_interval: 1,
            scenario: Scenario::Traffic,
            road: RoadLayout::default(),
            spawn: SpawnConfig::default(),
            sim: SimParams::default(),
            rss: RssParams::default(),
            reward: RewardWeights::default(),
            learner: LearnerConfig::default(),
            training: TrainingConfig::default(),
            output: OutputConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// 1.2 km, two clusters, a quarter of the full-scale flows, 200 s
    /// episodes, one decision per second and a learner sized for one CPU
    /// core.
    pub fn desk() -> Self {
        let full = SpawnConfig::default();
        Self {
            episode_length: 200.0,
            decision_interval: 10,
            road: RoadLayout::desk(),
            spawn: SpawnConfig {
                mainline_flow: 0.25 * full.mainline_flow,
                ramp_flow: 0.25 * full.ramp_flow,
                ..full
            },
            learner: LearnerConfig {
                hidden: vec![64, 128, 64],
                batch_size: 64,
                replay_capacity: 50_000,
                target_update_period: 1_000,
                exploration: ExplorationSchedule { decay: 0.9997, ..ExplorationSchedule::default() },
                max_grad_norm: 10.0,
                ..LearnerConfig::default()
            },
            training: TrainingConfig { rounds: 30, local_steps: 500, ..TrainingConfig::default() },
            ..Self::default()
        }
    }

    /// 400 m, three lanes, one cluster whose off-ramp sits at 300 m. A
    /// single CAV starts in the leftmost lane and must reach lane 1 in time.
    /// One decision per second; the checkpoint is the best validated round.
    pub fn toy() -> Self {
        Self {
            mode: FederationMode::Centralized,
            episode_length: 40.0,
            decision_interval: 10,
            scenario: Scenario::SingleCav { lane: 3, position: 10.0, speed: 25.0, exit_cluster: 1 },
            road: RoadLayout {
                mainline_length: 400.0,
                lane_count: 3,
                warmup_length: 0.0,
                cluster_count: 1,
                cluster_length: 400.0,
                ..RoadLayout::default()
            },
            spawn: SpawnConfig { mainline_flow: 150.0, ramp_flow: 0.0, cav_penetration: 0.0, ..SpawnConfig::default() },
            learner: LearnerConfig {
                hidden: vec![64, 64],
                batch_size: 64,
                replay_capacity: 50_000,
                target_update_period: 200,
                exploration: ExplorationSchedule { decay: 0.99985, ..ExplorationSchedule::default() },
                optimizer: AdamWConfig { learning_rate: 1e-4, ..AdamWConfig::default() },
                max_grad_norm: 10.0,
                ..LearnerConfig::default()
            },
            training: TrainingConfig {
                rounds: 20,
                local_steps: 4_000,
                updates_per_tick: 4,
                validation_episodes: 5,
                ..TrainingConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn with_penetration(mut self, pr: f64) -> Self {
        self.spawn.cav_penetration = pr;
        self
    }

    pub fn network(&self) -> Result<RoadNetwork> {
        RoadNetwork::from_layout(&self.road)
    }

    /// Reward weights with the ablation switch applied.
    pub fn effective_reward(&self) -> RewardWeights {
        let mut w = self.reward;
        if self.disable_priority_reward {
            w.lane_change = 0.0;
        }
        w
    }

    pub fn agent_count(&self) -> usize {
        self.mode.agent_count(self.road.cluster_count)
    }

    pub fn validate(&self) -> Result<()> {
        let net = self.network()?;
        observe::check_layout(&net)?;
        self.spawn.validate()?;
        self.rss.validate()?;
        self.reward.validate()?;
        self.learner.validate()?;
        if !(self.episode_length > 0.0) || self.episodes == 0 {
            return Err(PalcasError::Config("episode_length and episodes must be positive".into()));
        }
        if self.decision_interval == 0 {
            return Err(PalcasError::Config("decision_interval must be positive".into()));
        }
        if !(self.sim.step_size > 0.0) || !(self.sim.lane_change_duration > 0.0) {
            return Err(PalcasError::Config("step_size and lane_change_duration must be positive".into()));
        }
        let t = &self.training;
        if t.rounds == 0 || t.local_steps == 0 || t.updates_per_tick == 0 {
            return Err(PalcasError::Config("rounds, local_steps and updates_per_tick must be positive".into()));
        }
        let o = &self.output;
        if o.trajectory_stride == 0 || !(o.spacetime_bin_x > 0.0) || !(o.spacetime_bin_t > 0.0) {
            return Err(PalcasError::Config("output bins and stride must be positive".into()));
        }
        if self.bench.samples == 0 {
            return Err(PalcasError::Config("bench.samples must be positive".into()));
        }
        if let Scenario::SingleCav { lane, position, exit_cluster, .. } = &self.scenario {
            let exit_ok = net.cluster(*exit_cluster).is_some();
            if !net.is_mainline_lane(*lane) || !(0.0..net.mainline_length()).contains(position) || !exit_ok {
                return Err(PalcasError::Config("single_cav scenario does not fit the road".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PalcasError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PalcasError::Config(e.to_string()))
    }

    /// Reads a config file and applies the seed override from the
    /// environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| PalcasError::Config(format!("{}: {e}", path.display())))?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| PalcasError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [ExperimentConfig::default(), ExperimentConfig::desk(), ExperimentConfig::toy()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::from_toml("seed = 3\n[road]\nlanes = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lanes") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("mode = \"isolated\"\n").unwrap();
        assert_eq!(cfg.mode, FederationMode::Isolated);
        assert_eq!(cfg.learner, LearnerConfig::default());
        assert_eq!(cfg.agent_count(), 3);
    }

    #[test]
    fn oversized_road_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.road.lane_count = 6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ablation_zeroes_only_lane_change_weight() {
        let cfg = ExperimentConfig { disable_priority_reward: true, ..ExperimentConfig::default() };
        let w = cfg.effective_reward();
        assert_eq!(w.lane_change, 0.0);
        assert_eq!(RewardWeights { lane_change: cfg.reward.lane_change, ..w }, cfg.reward);
    }
}

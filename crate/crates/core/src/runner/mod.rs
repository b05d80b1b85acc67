//! Episode orchestration shared by training, evaluation and benchmarking.
//!
//! One tick: every agent picks actions for the CAVs in its scope from the
//! same snapshot, background vehicles follow the rule-based driver, the world
//! steps once, rewards are scored on the post-step state (including vehicles
//! removed this step), then new vehicles spawn.

mod bench;
mod train;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{ActionKind, HybridAction, ACCEL_MAX, ACCEL_MIN};
use crate::config::{ExperimentConfig, Scenario};
use crate::error::{PalcasError, Result};
use crate::export::RewardRow;
use crate::federation::FederationMode;
use crate::metrics::{compute_metrics, EpisodeMetrics, MetricsReport, TrajectorySample};
use crate::observe::{self, ClusterStats, Observation};
use crate::pdqn::{Checkpoint, ModelWeights, PdqnAgent};
use crate::reward::{self, RewardBreakdown, RewardWeights};
use crate::road::{Entry, Exit, RoadNetwork, Route};
use crate::scene::Scene;
use crate::sim::{Event, StepReport, World};
use crate::vehicle::{Vehicle, VehicleKind};

pub use bench::bench_inference;
pub use train::Trainer;

/// Independent seed streams derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    TrainEpisode = 1,
    EvalEpisode = 2,
    Agent = 3,
    Policy = 4,
    Bench = 5,
    Validation = 6,
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: SeedStream, index: u64) -> u64 {
    let mut z = seed
        ^ (stream as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Agent responsible for a CAV at `x`, if any.
pub fn agent_scope(mode: FederationMode, net: &RoadNetwork, v: &Vehicle) -> Option<usize> {
    if !v.is_cav() {
        return None;
    }
    let cluster = net.cluster_of(v.x).ok().flatten()?;
    Some(match mode {
        FederationMode::Centralized => 0,
        FederationMode::Fedavg | FederationMode::Isolated => cluster - 1,
    })
}

/// Rewards of one tick for the vehicles that acted.
pub struct TickResult {
    pub report: StepReport,
    pub rewards: Vec<(u64, RewardBreakdown)>,
}

pub struct Environment {
    cfg: ExperimentConfig,
    net: Arc<RoadNetwork>,
    weights: RewardWeights,
    world: World,
    stream: SeedStream,
    episode: u64,
    tracked: Option<u64>,
}

impl Environment {
    pub fn new(cfg: &ExperimentConfig, stream: SeedStream) -> Result<Self> {
        cfg.validate()?;
        let net = Arc::new(cfg.network()?);
        let world = World::new(Arc::clone(&net), cfg.sim, cfg.rss, 0);
        let mut env = Self {
            cfg: cfg.clone(),
            net,
            weights: cfg.effective_reward(),
            world,
            stream,
            episode: 0,
            tracked: None,
        };
        env.start_episode(0);
        Ok(env)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }
    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }
    pub fn world(&self) -> &World {
        &self.world
    }
    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }
    pub fn episode(&self) -> u64 {
        self.episode
    }
    pub fn reward_weights(&self) -> &RewardWeights {
        &self.weights
    }

    /// Replaces the world with a fresh one for episode `episode`.
    pub fn start_episode(&mut self, episode: u64) {
        self.episode = episode;
        let seed = derive_seed(self.cfg.seed, self.stream, episode);
        self.world = World::new(Arc::clone(&self.net), self.cfg.sim, self.cfg.rss, seed);
        self.tracked = None;
        if let Scenario::SingleCav { lane, position, speed, exit_cluster } = self.cfg.scenario {
            let route = Route::new(Entry::Mainline, Exit::OffRamp(exit_cluster));
            let v_lim = self.net.speed_limit();
            let v = Vehicle::new(0, VehicleKind::Cav, position, lane, speed.min(v_lim), v_lim, route, &self.net);
            self.tracked = Some(self.world.insert_vehicle(v));
        }
    }

    pub fn done(&self) -> bool {
        let timeout = self.world.time() >= self.cfg.episode_length - 1e-9;
        match self.tracked {
            Some(id) => timeout || self.world.vehicle(id).is_none(),
            None => timeout,
        }
    }

    /// Ends the current episode and returns its event log.
    pub fn finish_episode(&mut self) -> Vec<Event> {
        self.world.finish_episode();
        self.world.take_events()
    }

    /// Controlled CAV ids per agent, ascending.
    pub fn controlled(&self) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new(); self.cfg.agent_count()];
        for v in self.world.vehicles() {
            if let Some(k) = agent_scope(self.cfg.mode, &self.net, v) {
                out[k].push(v.id);
            }
        }
        out
    }

    pub fn scope_of(&self, id: u64) -> Option<usize> {
        self.world.vehicle(id).and_then(|v| agent_scope(self.cfg.mode, &self.net, v))
    }

    pub fn cluster_stats(&self) -> Vec<ClusterStats> {
        observe::cluster_stats(&self.net, self.world.vehicles())
    }

    /// Observations of `ids` on the current world.
    pub fn observe(&self, ids: &[u64], stats: &[ClusterStats]) -> Result<Vec<Observation>> {
        let scene = self.world.scene();
        ids.iter()
            .map(|&id| {
                let idx = scene.index_of(id).ok_or(PalcasError::UnknownVehicle(id))?;
                Ok(observe::encode(&scene, idx, stats))
            })
            .collect()
    }

    /// Applies the agents' actions, drives the rest, steps and spawns.
    pub fn step(&mut self, actions: &[(u64, HybridAction)]) -> Result<TickResult> {
        let mut controlled: Vec<u64> = Vec::with_capacity(actions.len());
        for &(id, a) in actions {
            self.world.apply_action(id, a)?;
            controlled.push(id);
        }
        controlled.sort_unstable();
        self.world.drive_background(&controlled);
        let report = self.world.step();

        let mut post: Vec<Vehicle> = self.world.vehicles().to_vec();
        post.extend(report.removed.iter().cloned());
        post.sort_by_key(|v| v.id);
        let scene = Scene::new(&self.net, &post);
        let stats = observe::cluster_stats(&self.net, &post);
        let length = self.net.mainline_length();
        let mut rewards = Vec::with_capacity(controlled.len());
        for &id in &controlled {
            let idx = scene.index_of(id).ok_or(PalcasError::UnknownVehicle(id))?;
            let x = post[idx].x.clamp(0.0, length * (1.0 - 1e-12));
            let mean = self
                .net
                .cluster_of(x)
                .ok()
                .flatten()
                .and_then(|c| stats.get(c - 1))
                .map_or(self.net.speed_limit(), |s| s.mean_speed);
            let r = reward::vehicle_reward(&scene, idx, mean, &self.weights, &self.cfg.rss)?;
            rewards.push((id, r));
        }
        if self.cfg.spawn.mainline_flow > 0.0 || self.cfg.spawn.ramp_flow > 0.0 {
            self.world.spawn_step(&self.cfg.spawn);
        }
        Ok(TickResult { report, rewards })
    }
}

/// Chooses hybrid actions for the CAVs of one agent.
pub trait Policy {
    /// `false` leaves CAVs to the rule-based driver.
    fn controls(&self) -> bool {
        true
    }
    fn act(&mut self, agent: usize, obs: &[&Observation]) -> Result<Vec<HybridAction>>;
}

/// Trained agents acting greedily in eval mode.
pub struct GreedyPolicy {
    pub agents: Vec<PdqnAgent>,
}

impl Policy for GreedyPolicy {
    fn act(&mut self, agent: usize, obs: &[&Observation]) -> Result<Vec<HybridAction>> {
        let a = self
            .agents
            .get_mut(agent)
            .ok_or_else(|| PalcasError::Contract(format!("no agent {agent}")))?;
        a.act(obs, false)
    }
}

/// Uniform discrete action with a uniform acceleration parameter.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _agent: usize, obs: &[&Observation]) -> Result<Vec<HybridAction>> {
        Ok(obs
            .iter()
            .map(|_| {
                let kind = ActionKind::ALL[self.rng.gen_range(0..ActionKind::ALL.len())];
                HybridAction::new(kind, self.rng.gen_range(ACCEL_MIN..=ACCEL_MAX))
            })
            .collect())
    }
}

/// CAVs drive like the background traffic.
pub struct RuleBasedPolicy;

impl Policy for RuleBasedPolicy {
    fn controls(&self) -> bool {
        false
    }
    fn act(&mut self, _agent: usize, _obs: &[&Observation]) -> Result<Vec<HybridAction>> {
        Ok(Vec::new())
    }
}

/// Everything recorded during one evaluation episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeRecord {
    pub events: Vec<Event>,
    pub trajectory: Vec<TrajectorySample>,
    pub rewards: Vec<RewardRow>,
    pub observations: Vec<(f64, u64, Observation)>,
    pub metrics: EpisodeMetrics,
    pub duration: f64,
}

/// An action in force for one vehicle.
struct Held {
    agent: usize,
    action: HybridAction,
    age: u32,
}

/// Runs evaluation episode `episode` under `policy`. Each controlled
/// vehicle's action is held for `decision_interval` ticks; observations
/// are kept at decision ticks only.
pub fn run_episode(
    env: &mut Environment,
    policy: &mut dyn Policy,
    episode: u64,
    keep_observations: bool,
) -> Result<EpisodeRecord> {
    env.start_episode(episode);
    let stride = env.config().output.trajectory_stride as u64;
    let interval = env.config().decision_interval;
    let mut held: BTreeMap<u64, Held> = BTreeMap::new();
    let mut rec = EpisodeRecord::default();
    let mut tick: u64 = 0;
    while !env.done() {
        if tick % stride == 0 {
            sample_trajectory(env.world(), &mut rec.trajectory);
        }
        let mut actions = Vec::new();
        if policy.controls() {
            let stats = env.cluster_stats();
            let mut kept = BTreeMap::new();
            for (k, ids) in env.controlled().into_iter().enumerate() {
                // a decision lapses after the interval or when the vehicle changes agent
                let fresh: Vec<u64> = ids
                    .iter()
                    .copied()
                    .filter(|id| held.get(id).map_or(true, |h| h.agent != k || h.age >= interval))
                    .collect();
                if !fresh.is_empty() {
                    let obs = env.observe(&fresh, &stats)?;
                    let refs: Vec<&Observation> = obs.iter().collect();
                    let chosen = policy.act(k, &refs)?;
                    if keep_observations {
                        let t = env.world().time();
                        rec.observations.extend(fresh.iter().zip(&obs).map(|(&id, o)| (t, id, *o)));
                    }
                    for (id, action) in fresh.into_iter().zip(chosen) {
                        held.insert(id, Held { agent: k, action, age: 0 });
                    }
                }
                for id in ids {
                    let mut h = held.remove(&id).expect("decision for every controlled vehicle");
                    actions.push((id, h.action));
                    h.age += 1;
                    kept.insert(id, h);
                }
            }
            held = kept;
        }
        let result = env.step(&actions)?;
        let t = env.world().time();
        rec.rewards.extend(result.rewards.into_iter().map(|(vehicle_id, breakdown)| RewardRow {
            time: t,
            vehicle_id,
            breakdown,
        }));
        tick += 1;
    }
    sample_trajectory(env.world(), &mut rec.trajectory);
    rec.duration = env.world().time();
    rec.events = env.finish_episode();
    rec.metrics = compute_metrics(&rec.events, &rec.trajectory, env.network());
    Ok(rec)
}

fn sample_trajectory(world: &World, out: &mut Vec<TrajectorySample>) {
    let t = world.time();
    out.extend(world.vehicles().iter().map(|v| TrajectorySample {
        time: t,
        vehicle_id: v.id,
        lane: v.lane,
        long_pos: v.x,
        lat_pos: v.lat,
        speed: v.v,
        accel: v.a,
    }));
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub episodes: Vec<EpisodeMetrics>,
    /// Full record of the first episode.
    pub first: EpisodeRecord,
}

/// `cfg.episodes` evaluation episodes on the evaluation seed stream.
pub fn evaluate(cfg: &ExperimentConfig, policy: &mut dyn Policy) -> Result<Evaluation> {
    let mut env = Environment::new(cfg, SeedStream::EvalEpisode)?;
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut first = None;
    for e in 0..cfg.episodes as u64 {
        let rec = run_episode(&mut env, policy, e, e == 0 && cfg.output.dump_observations)?;
        episodes.push(rec.metrics);
        if first.is_none() {
            first = Some(rec);
        }
    }
    Ok(Evaluation {
        report: MetricsReport::from_episodes(&episodes),
        episodes,
        first: first.unwrap_or_default(),
    })
}

/// Checkpoint signature for `agents` stored models of learner signature
/// `learner`.
pub fn checkpoint_signature(learner: &str, agents: usize) -> String {
    format!("{learner};agents={agents}")
}

/// Packs per-agent weights into one checkpoint.
pub fn pack_checkpoint(models: &[ModelWeights]) -> Result<Checkpoint> {
    let first = models.first().ok_or_else(|| PalcasError::Contract("no models to save".into()))?;
    let mut tensors = Vec::new();
    for (k, m) in models.iter().enumerate() {
        tensors.extend(m.tensors.iter().cloned().map(|mut t| {
            t.name = format!("agent{k}.{}", t.name);
            t
        }));
    }
    Ok(Checkpoint { signature: checkpoint_signature(&first.signature, models.len()), tensors })
}

/// Builds the agents `cfg` calls for from a checkpoint. A single stored
/// model is shared by every agent.
pub fn load_agents(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<Vec<PdqnAgent>> {
    let learner = cfg.learner.signature();
    let want = cfg.agent_count();
    let stored = [1, want]
        .into_iter()
        .find(|&n| ckpt.signature == checkpoint_signature(&learner, n))
        .ok_or_else(|| {
            PalcasError::Schema(format!(
                "checkpoint signature {:?} does not match {:?}",
                ckpt.signature,
                checkpoint_signature(&learner, want)
            ))
        })?;
    (0..want)
        .map(|k| {
            let src = if stored == 1 { 0 } else { k };
            let prefix = format!("agent{src}.");
            let tensors = ckpt
                .tensors
                .iter()
                .filter_map(|t| {
                    t.name.strip_prefix(&prefix).map(|n| crate::nn::NamedTensor { name: n.to_string(), ..t.clone() })
                })
                .collect();
            let mut a = PdqnAgent::new(cfg.learner.clone(), derive_seed(cfg.seed, SeedStream::Agent, k as u64))?;
            a.import_weights(&ModelWeights { signature: learner.clone(), tensors })?;
            a.update_target();
            Ok(a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_across_streams() {
        let a = derive_seed(7, SeedStream::TrainEpisode, 0);
        let b = derive_seed(7, SeedStream::EvalEpisode, 0);
        let c = derive_seed(7, SeedStream::TrainEpisode, 1);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(7, SeedStream::TrainEpisode, 0));
    }

    #[test]
    fn single_cav_episode_resolves() {
        let cfg = ExperimentConfig::toy();
        let mut env = Environment::new(&cfg, SeedStream::EvalEpisode).unwrap();
        let rec = run_episode(&mut env, &mut RuleBasedPolicy, 0, false).unwrap();
        assert!(rec.duration <= cfg.episode_length + 1e-9);
        assert_eq!(rec.metrics.spawned_cavs, 1);
    }

    #[test]
    fn checkpoint_pack_and_load() {
        let cfg = ExperimentConfig {
            learner: crate::pdqn::LearnerConfig { hidden: vec![8], ..Default::default() },
            mode: FederationMode::Isolated,
            ..ExperimentConfig::desk()
        };
        let agents: Vec<PdqnAgent> =
            (0..2).map(|k| PdqnAgent::new(cfg.learner.clone(), k).unwrap()).collect();
        let ckpt = pack_checkpoint(&agents.iter().map(|a| a.export_weights()).collect::<Vec<_>>()).unwrap();
        let loaded = load_agents(&cfg, &ckpt).unwrap();
        for (a, b) in agents.iter().zip(&loaded) {
            assert_eq!(a.export_weights(), b.export_weights());
        }
        let three = ExperimentConfig { mode: FederationMode::Isolated, ..ExperimentConfig::default() };
        assert!(matches!(load_agents(&three, &ckpt), Err(PalcasError::Schema(_))));
    }
}

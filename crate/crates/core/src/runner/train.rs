use std::collections::BTreeMap;
use std::time::Instant;

use super::{derive_seed, pack_checkpoint, run_episode, Environment, GreedyPolicy, SeedStream};
use crate::action::HybridAction;
use crate::config::ExperimentConfig;
use crate::error::{PalcasError, Result};
use crate::federation::{self, Contribution, FederationMode, RoundReport, RoundRow, Validation};
use crate::metrics::MetricsReport;
use crate::observe::{ClusterStats, Observation};
use crate::pdqn::{Checkpoint, ModelWeights, PdqnAgent, Transition};

/// Federated training loop over a continuously running environment.
pub struct Trainer {
    cfg: ExperimentConfig,
    env: Environment,
    agents: Vec<PdqnAgent>,
    rounds_done: usize,
    rows: Vec<RoundRow>,
    episode: u64,
    /// Best validated round and its models.
    best: Option<(Validation, Vec<ModelWeights>)>,
    /// Decisions in force, by vehicle id.
    open: BTreeMap<u64, Pending>,
}

/// A decision held for up to `decision_interval` ticks, accumulating its
/// discounted reward.
struct Pending {
    agent: usize,
    state: Observation,
    action: HybridAction,
    reward: f64,
    ticks: u32,
}

#[derive(Default, Clone, Copy)]
struct AgentTally {
    samples: u64,
    steps: u64,
    loss_sum: f64,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let env = Environment::new(cfg, SeedStream::TrainEpisode)?;
        let mut agents = (0..cfg.agent_count())
            .map(|k| PdqnAgent::new(cfg.learner.clone(), derive_seed(cfg.seed, SeedStream::Agent, k as u64)))
            .collect::<Result<Vec<_>>>()?;
        if cfg.mode == FederationMode::Fedavg {
            let global = agents[0].export_weights();
            federation::broadcast(&mut agents, &global)?;
            agents.iter_mut().for_each(PdqnAgent::update_target);
        }
        Ok(Self { cfg: cfg.clone(), env, agents, rounds_done: 0, rows: Vec::new(), episode: 0, best: None, open: BTreeMap::new() })
    }

    pub fn agents(&self) -> &[PdqnAgent] {
        &self.agents
    }
    pub fn rows(&self) -> &[RoundRow] {
        &self.rows
    }
    pub fn rounds_done(&self) -> usize {
        self.rounds_done
    }
    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// One round: local training until every agent has taken its gradient
    /// steps (or the tick cap is hit), then aggregation and broadcast in
    /// fedavg mode. A failing round is retried once from the weights it
    /// started with.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let start: Vec<ModelWeights> = self.agents.iter().map(PdqnAgent::export_weights).collect();
        match self.try_round() {
            Ok(r) => Ok(r),
            Err(first) => {
                for (a, w) in self.agents.iter_mut().zip(&start) {
                    a.import_weights(w)?;
                }
                self.try_round().map_err(|second| {
                    PalcasError::Numerical(format!("round {} failed twice: {first}; {second}", self.rounds_done))
                })
            }
        }
    }

    fn try_round(&mut self) -> Result<RoundReport> {
        let clock = Instant::now();
        let k = self.agents.len();
        let target = self.cfg.training.local_steps;
        let cap = self.cfg.training.round_tick_cap();
        let mut tally = vec![AgentTally::default(); k];
        let mut ticks = 0u64;
        while tally.iter().any(|t| t.steps < target) && ticks < cap {
            self.tick(&mut tally)?;
            ticks += 1;
        }

        let round = self.rounds_done;
        let mut global_checksum = None;
        if self.cfg.mode == FederationMode::Fedavg {
            let contributions: Vec<Contribution> = self
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| Contribution { agent_id: i, weights: a.export_weights(), samples: tally[i].samples })
                .collect();
            let global = federation::aggregate(&contributions)?;
            let sums = federation::broadcast(&mut self.agents, &global)?;
            let expected = global.checksum();
            if sums.iter().any(|&s| s != expected) {
                return Err(PalcasError::Aggregation("agent weights differ from the broadcast model".into()));
            }
            global_checksum = Some(expected);
        }
        let wall_ms = if self.cfg.training.record_wall_time { clock.elapsed().as_millis() as u64 } else { 0 };
        let rows: Vec<RoundRow> = tally
            .iter()
            .enumerate()
            .map(|(i, t)| RoundRow {
                round,
                agent_id: i,
                n_k: t.samples,
                mean_loss: if t.steps > 0 { t.loss_sum / t.steps as f64 } else { f64::NAN },
                epsilon: self.agents[i].epsilon(),
                wall_ms,
            })
            .collect();
        let validation = self.validate()?;
        self.rows.extend(rows.iter().cloned());
        self.rounds_done += 1;
        Ok(RoundReport {
            round,
            rows,
            global_checksum,
            agent_checksums: self.agents.iter().map(|a| a.export_weights().checksum()).collect(),
            ticks,
            validation,
        })
    }

    /// Greedy episodes on the validation stream with copies of the current
    /// models; keeps the models if they score at least as well as the best
    /// round so far. Leaves the agents and the training environment
    /// untouched.
    fn validate(&mut self) -> Result<Option<Validation>> {
        let episodes = self.cfg.training.validation_episodes;
        if episodes == 0 {
            return Ok(None);
        }
        let models: Vec<ModelWeights> = self.agents.iter().map(PdqnAgent::export_weights).collect();
        let agents = models
            .iter()
            .map(|w| {
                let mut a = PdqnAgent::new(self.cfg.learner.clone(), 0)?;
                a.import_weights(w)?;
                Ok(a)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut policy = GreedyPolicy { agents };
        let mut env = Environment::new(&self.cfg, SeedStream::Validation)?;
        let dt = self.cfg.sim.step_size;
        let mut metrics = Vec::with_capacity(episodes);
        let mut ticks = 0;
        for e in 0..episodes as u64 {
            let rec = run_episode(&mut env, &mut policy, e, false)?;
            ticks += (rec.duration / dt).round() as u64;
            metrics.push(rec.metrics);
        }
        let report = MetricsReport::from_episodes(&metrics);
        let mean = |m: &str| report.get(m).and_then(|r| r.mean);
        let mut v = Validation { dsr: mean("dsr"), collision_rate: mean("collision_rate"), ticks, selected: false };
        if self.best.as_ref().map_or(true, |(b, _)| v.beats(b)) {
            v.selected = true;
            self.best = Some((v, models));
        }
        Ok(Some(v))
    }

    fn tick(&mut self, tally: &mut [AgentTally]) -> Result<()> {
        let stats = self.env.cluster_stats();
        let mut actions = Vec::new();
        for (agent, ids) in self.env.controlled().into_iter().enumerate() {
            let fresh: Vec<u64> = ids.iter().copied().filter(|id| !self.open.contains_key(id)).collect();
            if !fresh.is_empty() {
                let obs = self.env.observe(&fresh, &stats)?;
                let refs: Vec<&Observation> = obs.iter().collect();
                let chosen = self.agents[agent].act(&refs, true)?;
                for ((id, state), action) in fresh.into_iter().zip(obs).zip(chosen) {
                    self.open.insert(id, Pending { agent, state, action, reward: 0.0, ticks: 0 });
                }
            }
            actions.extend(ids.into_iter().map(|id| (id, self.open[&id].action)));
        }

        let result = self.env.step(&actions)?;
        let stats = self.env.cluster_stats();
        let discount = self.cfg.learner.discount;
        let interval = self.cfg.decision_interval;
        for (id, breakdown) in result.rewards {
            let p = self.open.get_mut(&id).expect("reward for an acting vehicle");
            p.reward += discount.powi(p.ticks as i32) * breakdown.total;
            p.ticks += 1;
            let continuing = self.env.scope_of(id) == Some(p.agent);
            if !continuing || p.ticks >= interval {
                let p = self.open.remove(&id).expect("open decision");
                self.close(id, p, continuing, &stats, tally)?;
            }
        }

        let target = self.cfg.training.local_steps;
        for (agent, t) in self.agents.iter_mut().zip(tally.iter_mut()) {
            for _ in 0..self.cfg.training.updates_per_tick {
                if t.steps >= target {
                    break;
                }
                match agent.train_step()? {
                    Some(s) => {
                        t.steps += 1;
                        t.loss_sum += s.q_loss;
                    }
                    None => break,
                }
            }
            agent.tick();
        }

        if self.env.done() {
            // decisions still held at the time limit bootstrap from the last state
            let stats = self.env.cluster_stats();
            for (id, p) in std::mem::take(&mut self.open) {
                self.close(id, p, true, &stats, tally)?;
            }
            self.env.finish_episode();
            self.episode += 1;
            self.env.start_episode(self.episode);
        }
        Ok(())
    }

    /// Stores a finished decision as one transition.
    fn close(&mut self, id: u64, p: Pending, continuing: bool, stats: &[ClusterStats], tally: &mut [AgentTally]) -> Result<()> {
        let next_state = if continuing { self.env.observe(&[id], stats)?[0] } else { p.state };
        self.agents[p.agent].remember(Transition {
            state: p.state,
            action: p.action,
            reward: p.reward,
            ticks: p.ticks,
            next_state,
            terminal: !continuing,
        });
        tally[p.agent].samples += 1;
        Ok(())
    }

    /// Runs every configured round, calling `on_round` after each.
    pub fn train(&mut self, mut on_round: impl FnMut(&RoundReport)) -> Result<()> {
        while self.rounds_done < self.cfg.training.rounds {
            let r = self.run_round()?;
            on_round(&r);
        }
        Ok(())
    }

    /// The global model in fedavg and centralized modes, every agent's
    /// model in isolated mode. With validation enabled, the models of the
    /// best validated round.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let current: Vec<ModelWeights>;
        let models = match &self.best {
            Some((_, m)) => m,
            None => {
                current = self.agents.iter().map(PdqnAgent::export_weights).collect();
                &current
            }
        };
        match self.cfg.mode {
            FederationMode::Isolated => pack_checkpoint(models),
            FederationMode::Fedavg | FederationMode::Centralized => pack_checkpoint(&models[..1]),
        }
    }

    pub fn into_agents(self) -> Vec<PdqnAgent> {
        self.agents
    }
}

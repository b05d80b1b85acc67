//! Parametrized deep Q-network agent.
//!
//! A parameter network maps an observation to one acceleration; a Q-network
//! scores the four discrete actions given the observation and that
//! acceleration. Both have target copies refreshed by hard updates.

mod checkpoint;
mod replay;

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionKind, HybridAction, ACCEL_MAX, ACCEL_MIN, ACTION_COUNT};
use crate::error::{PalcasError, Result};
use crate::nn::{self, AdamW, AdamWConfig, Grads, Mlp, MlpSpec, NamedTensor};
use crate::observe::{Observation, OBS_DIM};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use replay::{ReplayBuffer, Transition};

/// Midpoint and half-width of the acceleration range.
const ACCEL_MID: f64 = 0.5 * (ACCEL_MAX + ACCEL_MIN);
const ACCEL_HALF: f64 = 0.5 * (ACCEL_MAX - ACCEL_MIN);
/// Scale of the acceleration input to the Q-network.
const ACCEL_INPUT_SCALE: f64 = 4.5;

/// Multiplicative ε decay per environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.02, decay: 0.999985 }
    }
}

impl ExplorationSchedule {
    pub fn epsilon(&self, step: u64) -> f64 {
        let e = self.start * self.decay.powf(step as f64);
        e.max(self.end)
    }

    /// First step at which ε reaches its floor.
    pub fn steps_to_floor(&self) -> u64 {
        if self.start <= self.end {
            return 0;
        }
        ((self.end / self.start).ln() / self.decay.ln()).ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClock {
    GradientSteps,
    EnvironmentSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub discount: f64,
    pub replay_capacity: usize,
    pub target_update_period: u64,
    pub target_clock: TargetClock,
    pub optimizer: AdamWConfig,
    pub exploration: ExplorationSchedule,
    /// Global gradient-norm ceiling per network; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 512, 256],
            dropout: 0.1,
            batch_size: 256,
            discount: 0.995,
            replay_capacity: 100_000,
            target_update_period: 15_000,
            target_clock: TargetClock::GradientSteps,
            optimizer: AdamWConfig::default(),
            exploration: ExplorationSchedule::default(),
            max_grad_norm: 0.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.q_spec().validate()?;
        let e = &self.exploration;
        let ok = self.batch_size > 0
            && self.replay_capacity > 0
            && self.target_update_period > 0
            && (0.0..=1.0).contains(&self.discount)
            && (0.0..=1.0).contains(&e.start)
            && (0.0..=1.0).contains(&e.end)
            && e.decay > 0.0
            && e.decay <= 1.0
            && self.optimizer.learning_rate > 0.0
            && self.max_grad_norm >= 0.0;
        if !ok {
            return Err(PalcasError::Config("learner hyperparameters out of range".into()));
        }
        Ok(())
    }

    pub fn q_spec(&self) -> MlpSpec {
        MlpSpec { input: OBS_DIM + 1, hidden: self.hidden.clone(), output: ACTION_COUNT, dropout: self.dropout }
    }

    pub fn param_spec(&self) -> MlpSpec {
        MlpSpec { input: OBS_DIM, hidden: self.hidden.clone(), output: 1, dropout: self.dropout }
    }

    /// Architecture fingerprint stored in checkpoints.
    pub fn signature(&self) -> String {
        let widths = |s: MlpSpec| {
            let mut w = vec![s.input];
            w.extend(&s.hidden);
            w.push(s.output);
            w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-")
        };
        format!("pdqn;q={};param={}", widths(self.q_spec()), widths(self.param_spec()))
    }
}

/// Exported learner weights: online Q and parameter networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub signature: String,
    pub tensors: Vec<NamedTensor>,
}

impl ModelWeights {
    pub fn checksum(&self) -> u64 {
        nn::checksum(&self.tensors)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

fn to_accel(raw: f64) -> f64 {
    ACCEL_MID + ACCEL_HALF * raw.tanh()
}

fn stack(obs: &[&Observation]) -> Array2<f64> {
    let mut x = Array2::zeros((obs.len(), OBS_DIM));
    for (mut row, o) in x.rows_mut().into_iter().zip(obs) {
        row.assign(&ndarray::ArrayView1::from(&o.0[..]));
    }
    x
}

fn with_accel(states: &Array2<f64>, accel: &[f64]) -> Array2<f64> {
    let width = states.ncols();
    let mut x = Array2::zeros((states.nrows(), width + 1));
    x.slice_mut(s![.., ..width]).assign(states);
    for (r, a) in accel.iter().enumerate() {
        x[[r, width]] = a / ACCEL_INPUT_SCALE;
    }
    x
}

/// Huber loss of the taken actions' Q-values against `targets`, and its
/// gradient with respect to the Q-network weights. Runs `q` in training
/// mode, so batch-norm running statistics advance.
pub fn q_loss_gradient(
    q: &mut Mlp,
    states: &Array2<f64>,
    taken_accel: &[f64],
    taken_kind: &[usize],
    targets: &[f64],
    rng: &mut impl Rng,
) -> (f64, Grads) {
    let n = states.nrows();
    let (q_out, tape) = q.forward_train(&with_accel(states, taken_accel), rng);
    let mut pred = Array2::zeros((n, 1));
    let mut target = Array2::zeros((n, 1));
    for i in 0..n {
        pred[[i, 0]] = q_out[[i, taken_kind[i]]];
        target[[i, 0]] = targets[i];
    }
    let (loss, d_pred) = nn::huber(&pred, &target);
    let mut d_q = Array2::zeros(q_out.raw_dim());
    for i in 0..n {
        d_q[[i, taken_kind[i]]] = d_pred[[i, 0]];
    }
    let (grads, _) = q.backward(&tape, &d_q);
    (loss, grads)
}

/// Parameter-network loss `-mean_i sum_k Q(s_i, k, accel(s_i))` with `q` in
/// evaluation mode, and its gradient with respect to the parameter-network
/// weights. Runs `param` in training mode.
pub fn param_loss_gradient(param: &mut Mlp, q: &Mlp, states: &Array2<f64>, rng: &mut impl Rng) -> (f64, Grads) {
    let n = states.nrows();
    let width = states.ncols();
    let (raw, p_tape) = param.forward_train(states, rng);
    let accel: Vec<f64> = raw.column(0).iter().map(|&r| to_accel(r)).collect();
    let (values, v_tape) = q.forward_eval(&with_accel(states, &accel));
    let loss = -values.sum_axis(Axis(1)).mean().expect("non-empty batch");
    let d_values = Array2::from_elem(values.raw_dim(), -1.0 / n as f64);
    let (_, d_input) = q.backward(&v_tape, &d_values);
    let mut d_raw = Array2::zeros((n, 1));
    for i in 0..n {
        let th = raw[[i, 0]].tanh();
        d_raw[[i, 0]] = d_input[[i, width]] / ACCEL_INPUT_SCALE * ACCEL_HALF * (1.0 - th * th);
    }
    let (grads, _) = param.backward(&p_tape, &d_raw);
    (loss, grads)
}

/// Accelerations and Q-values of `param`/`q` in eval mode for a batch.
pub fn evaluate(q: &Mlp, param: &Mlp, states: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let accel: Vec<f64> = param.infer(states).column(0).iter().map(|&r| to_accel(r)).collect();
    let values = q.infer(&with_accel(states, &accel));
    (accel, values)
}

/// ε-greedy hybrid action per observation.
pub fn select_actions(
    q: &Mlp,
    param: &Mlp,
    obs: &[&Observation],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<Vec<HybridAction>> {
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    let (accel, values) = evaluate(q, param, &stack(obs));
    if accel.iter().any(|a| !a.is_finite()) || values.iter().any(|v| !v.is_finite()) {
        return Err(PalcasError::Numerical("non-finite network output during action selection".into()));
    }
    Ok(values
        .rows()
        .into_iter()
        .zip(accel)
        .map(|(row, c)| {
            if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                let kind = ActionKind::ALL[rng.gen_range(0..ACTION_COUNT)];
                HybridAction::new(kind, rng.gen_range(ACCEL_MIN..=ACCEL_MAX))
            } else {
                let k = greedy_index(row.as_slice().expect("contiguous"));
                HybridAction::new(ActionKind::ALL[k], c)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub q_loss: f64,
    pub param_loss: f64,
}

#[derive(Debug, Clone)]
pub struct PdqnAgent {
    cfg: LearnerConfig,
    q: Mlp,
    q_target: Mlp,
    param: Mlp,
    param_target: Mlp,
    q_opt: AdamW,
    param_opt: AdamW,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    grad_steps: u64,
    env_steps: u64,
}

impl PdqnAgent {
    pub fn new(cfg: LearnerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Mlp::new(cfg.q_spec(), &mut rng)?;
        let param = Mlp::new(cfg.param_spec(), &mut rng)?;
        let sizes = |m: &Mlp| m.trainable().iter().map(|t| t.len()).collect::<Vec<_>>();
        Ok(Self {
            q_opt: AdamW::new(cfg.optimizer, &sizes(&q)),
            param_opt: AdamW::new(cfg.optimizer, &sizes(&param)),
            q_target: q.clone(),
            param_target: param.clone(),
            q,
            param,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            rng,
            grad_steps: 0,
            env_steps: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }
    pub fn q_network(&self) -> &Mlp {
        &self.q
    }
    pub fn param_network(&self) -> &Mlp {
        &self.param
    }
    pub fn target_q_network(&self) -> &Mlp {
        &self.q_target
    }
    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }
    pub fn gradient_steps(&self) -> u64 {
        self.grad_steps
    }
    pub fn environment_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.exploration.epsilon(self.env_steps)
    }

    /// Counts one environment step for ε decay and the environment-step
    /// target clock.
    pub fn tick(&mut self) {
        self.env_steps += 1;
        if self.cfg.target_clock == TargetClock::EnvironmentSteps
            && self.env_steps % self.cfg.target_update_period == 0
        {
            self.update_target();
        }
    }

    /// Actions for a batch of observations; `explore` applies the current ε.
    pub fn act(&mut self, obs: &[&Observation], explore: bool) -> Result<Vec<HybridAction>> {
        let eps = if explore { self.epsilon() } else { 0.0 };
        select_actions(&self.q, &self.param, obs, eps, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    pub fn ready(&self) -> bool {
        self.replay.len() >= self.cfg.batch_size
    }

    /// One gradient step on both networks from a replay sample, or `None`
    /// while the buffer holds fewer than a batch.
    pub fn train_step(&mut self) -> Result<Option<TrainStats>> {
        if !self.ready() {
            return Ok(None);
        }
        let batch: Vec<Transition> =
            self.replay.sample(self.cfg.batch_size, &mut self.rng).into_iter().cloned().collect();
        let stats = self.train_on(&batch)?;
        Ok(Some(stats))
    }

    /// One gradient step on an explicit batch.
    pub fn train_on(&mut self, batch: &[Transition]) -> Result<TrainStats> {
        let states = stack(&batch.iter().map(|t| &t.state).collect::<Vec<_>>());
        let next = stack(&batch.iter().map(|t| &t.next_state).collect::<Vec<_>>());

        let (_, next_q) = evaluate(&self.q_target, &self.param_target, &next);
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_q.rows())
            .map(|(t, row)| {
                if t.terminal {
                    t.reward
                } else {
                    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    t.reward + self.cfg.discount.powi(t.ticks as i32) * best
                }
            })
            .collect();

        let taken: Vec<f64> = batch.iter().map(|t| t.action.accel()).collect();
        let kinds: Vec<usize> = batch.iter().map(|t| t.action.kind.index()).collect();
        let (q_loss, mut q_grads) = q_loss_gradient(&mut self.q, &states, &taken, &kinds, &targets, &mut self.rng);
        self.clip(&mut q_grads);
        self.q_opt.update(self.q.trainable_mut(), &q_grads);

        // the parameter network ascends the updated Q-network
        let (param_loss, mut p_grads) = param_loss_gradient(&mut self.param, &self.q, &states, &mut self.rng);
        self.clip(&mut p_grads);
        self.param_opt.update(self.param.trainable_mut(), &p_grads);

        if !q_loss.is_finite() || !param_loss.is_finite() {
            return Err(PalcasError::Numerical(format!(
                "non-finite loss at gradient step {}: q_loss={q_loss}, param_loss={param_loss}, replay={}",
                self.grad_steps,
                self.replay.len()
            )));
        }
        self.grad_steps += 1;
        if self.cfg.target_clock == TargetClock::GradientSteps
            && self.grad_steps % self.cfg.target_update_period == 0
        {
            self.update_target();
        }
        Ok(TrainStats { q_loss, param_loss })
    }

    fn clip(&self, g: &mut Grads) {
        let limit = self.cfg.max_grad_norm;
        if limit > 0.0 {
            let norm = g.norm();
            if norm > limit {
                g.scale(limit / norm);
            }
        }
    }

    /// Hard copy of the online networks into the targets.
    pub fn update_target(&mut self) {
        self.q_target = self.q.clone();
        self.param_target = self.param.clone();
    }

    pub fn export_weights(&self) -> ModelWeights {
        let mut tensors = self.q.named_tensors("q");
        tensors.extend(self.param.named_tensors("param"));
        ModelWeights { signature: self.cfg.signature(), tensors }
    }

    /// Loads online weights; targets are left untouched.
    pub fn import_weights(&mut self, w: &ModelWeights) -> Result<()> {
        let expected = self.cfg.signature();
        if w.signature != expected {
            return Err(PalcasError::Schema(format!(
                "architecture signature {:?} does not match {:?}",
                w.signature, expected
            )));
        }
        self.q.load_named("q", &w.tensors)?;
        self.param.load_named("param", &w.tensors)
    }

    /// Q-values and accelerations of the online networks (eval mode).
    pub fn q_values(&self, obs: &[&Observation]) -> (Vec<f64>, Array2<f64>) {
        evaluate(&self.q, &self.param, &stack(obs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LearnerConfig {
        LearnerConfig { hidden: vec![8], batch_size: 4, replay_capacity: 64, ..LearnerConfig::default() }
    }

    fn obs(rng: &mut ChaCha8Rng) -> Observation {
        let mut o = [0.0; OBS_DIM];
        o.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        Observation(o)
    }

    #[test]
    fn epsilon_floor_step() {
        let s = ExplorationSchedule::default();
        let n = s.steps_to_floor();
        assert_eq!(n, 260_800);
        assert!(s.epsilon(n - 1) > 0.02);
        assert_eq!(s.epsilon(n), 0.02);
        assert_eq!(s.epsilon(0), 1.0);
    }

    #[test]
    fn greedy_ties_and_argmax() {
        assert_eq!(greedy_index(&[0.1, 0.5, 0.3, 0.2]), 1);
        assert_eq!(greedy_index(&[0.5, 0.5, 0.1, 0.1]), 0);
    }

    #[test]
    fn accel_is_bounded_structurally() {
        for raw in [-1e9, -3.0, 0.0, 3.0, 1e9] {
            let a = to_accel(raw);
            assert!((ACCEL_MIN..=ACCEL_MAX).contains(&a));
        }
    }

    #[test]
    fn export_import_reproduces_outputs() {
        let mut a = PdqnAgent::new(tiny(), 1).unwrap();
        let mut b = PdqnAgent::new(tiny(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probes: Vec<Observation> = (0..20).map(|_| obs(&mut rng)).collect();
        let refs: Vec<&Observation> = probes.iter().collect();
        for _ in 0..8 {
            a.remember(Transition {
                state: obs(&mut rng),
                action: HybridAction::accelerate(1.0),
                reward: 0.5,
                ticks: 1,
                next_state: obs(&mut rng),
                terminal: false,
            });
        }
        a.train_step().unwrap().unwrap();
        b.import_weights(&a.export_weights()).unwrap();
        assert_eq!(a.q_values(&refs), b.q_values(&refs));

        let other = LearnerConfig { hidden: vec![8, 8], ..tiny() };
        let mut c = PdqnAgent::new(other, 3).unwrap();
        assert!(matches!(c.import_weights(&a.export_weights()), Err(PalcasError::Schema(_))));
    }

    #[test]
    fn target_copies_on_schedule() {
        let cfg = LearnerConfig { target_update_period: 3, ..tiny() };
        let mut a = PdqnAgent::new(cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..8 {
            a.remember(Transition {
                state: obs(&mut rng),
                action: HybridAction::hold(),
                reward: -1.0,
                ticks: 1,
                next_state: obs(&mut rng),
                terminal: true,
            });
        }
        let frozen = a.target_q_network().clone();
        a.train_step().unwrap();
        a.train_step().unwrap();
        assert_eq!(a.target_q_network(), &frozen);
        assert_ne!(a.q_network(), &frozen);
        a.train_step().unwrap();
        assert_eq!(a.target_q_network(), a.q_network());
    }

    #[test]
    fn held_transition_bootstraps_with_its_tick_count() {
        let gamma = tiny().discount;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch: Vec<Transition> = (0..4)
            .map(|_| Transition {
                state: obs(&mut rng),
                action: HybridAction::accelerate(0.5),
                reward: 0.3,
                ticks: 2,
                next_state: obs(&mut rng),
                terminal: false,
            })
            .collect();
        // two held ticks at γ equal one tick at γ²
        let mut held = PdqnAgent::new(tiny(), 9).unwrap();
        let mut single = PdqnAgent::new(LearnerConfig { discount: gamma * gamma, ..tiny() }, 9).unwrap();
        let once: Vec<Transition> = batch.iter().map(|t| Transition { ticks: 1, ..t.clone() }).collect();
        assert_eq!(held.train_on(&batch).unwrap().q_loss, single.train_on(&once).unwrap().q_loss);
        assert_eq!(held.export_weights().tensors, single.export_weights().tensors);
    }
}

//! End-to-end checks of the harness: persisted outputs, ablation,
//! baseline topologies, broadcast and the command-line tool.

use std::fs::File;
use std::process::Command;

use ndarray::Array2;
use palcas::commands;
use palcas::config::ExperimentConfig;
use palcas::export;
use palcas::federation::{self, FederationMode};
use palcas::metrics::compute_metrics;
use palcas::observe::{Observation, OBS_DIM};
use palcas::pdqn::PdqnAgent;
use palcas::reward::RewardBreakdown;
use palcas::runner::{evaluate, load_agents, pack_checkpoint, GreedyPolicy, RuleBasedPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Desk geometry with short episodes.
fn short_desk(pr: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk().with_penetration(pr);
    cfg.episode_length = 40.0;
    cfg.episodes = 2;
    cfg
}

/// An untrained single-model checkpoint for `cfg`'s learner.
fn fresh_checkpoint(cfg: &ExperimentConfig) -> palcas::pdqn::Checkpoint {
    let agent = PdqnAgent::new(cfg.learner.clone(), 11).unwrap();
    pack_checkpoint(&[agent.export_weights()]).unwrap()
}

#[test]
fn metrics_recompute_exactly_from_persisted_logs() {
    let cfg = short_desk(0.6);
    let dir = tempfile::tempdir().unwrap();
    let ev = commands::eval(&cfg, &fresh_checkpoint(&cfg), dir.path()).unwrap();
    let events = export::read_events(File::open(dir.path().join("events.csv")).unwrap()).unwrap();
    let trajectory = export::read_trajectory(File::open(dir.path().join("trajectory.csv")).unwrap()).unwrap();
    assert_eq!(events, ev.first.events);
    assert_eq!(trajectory, ev.first.trajectory);
    let recomputed = compute_metrics(&events, &trajectory, &cfg.network().unwrap());
    assert_eq!(recomputed, ev.episodes[0]);
    assert!(ev.episodes[0].spawned_cavs > 0);
}

#[test]
fn ablation_changes_only_the_lane_change_contribution() {
    let full = short_desk(0.6);
    let ablated = ExperimentConfig { disable_priority_reward: true, ..full.clone() };
    let ckpt = fresh_checkpoint(&full);
    let run = |cfg: &ExperimentConfig| {
        let mut policy = GreedyPolicy { agents: load_agents(cfg, &ckpt).unwrap() };
        evaluate(cfg, &mut policy).unwrap().first
    };
    let (a, b) = (run(&full), run(&ablated));
    assert_eq!(a.events, b.events);
    assert_eq!(a.rewards.len(), b.rewards.len());
    assert!(!a.rewards.is_empty());
    let wf = full.effective_reward();
    let wa = ablated.effective_reward();
    for (ra, rb) in a.rewards.iter().zip(&b.rewards) {
        let (x, y) = (&ra.breakdown, &rb.breakdown);
        assert_eq!((x.efficiency, x.safety, x.comfort, x.priority, x.deadlock), (y.efficiency, y.safety, y.comfort, y.priority, y.deadlock));
        // the ablated total is the full assembly with the lane-change weight zeroed
        let rebuilt = RewardBreakdown::assemble(x.efficiency, x.safety, x.comfort, x.priority, x.deadlock, &wa);
        assert_eq!(y.total, rebuilt.total);
        assert!((x.total - wf.lane_change * x.priority.total - y.total).abs() < 1e-12);
    }
}

#[test]
fn baseline_topologies_share_the_environment() {
    let logs: Vec<_> = [FederationMode::Fedavg, FederationMode::Isolated, FederationMode::Centralized]
        .into_iter()
        .map(|mode| {
            let cfg = ExperimentConfig { mode, ..short_desk(0.0) };
            evaluate(&cfg, &mut RuleBasedPolicy).unwrap().first.events
        })
        .collect();
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0], logs[2]);
}

#[test]
fn broadcast_makes_agents_agree_on_a_probe_batch() {
    let cfg = ExperimentConfig::toy().learner;
    let mut agents: Vec<PdqnAgent> = (0..3).map(|k| PdqnAgent::new(cfg.clone(), k).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probe: Vec<Observation> = (0..16)
        .map(|_| Observation(std::array::from_fn::<f64, OBS_DIM, _>(|_| rng.gen_range(-1.0..1.0))))
        .collect();
    let refs: Vec<&Observation> = probe.iter().collect();
    assert_ne!(agents[0].q_values(&refs).1, agents[1].q_values(&refs).1);
    let contributions: Vec<_> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| federation::Contribution { agent_id: i, weights: a.export_weights(), samples: 10 * (i as u64 + 1) })
        .collect();
    let global = federation::aggregate(&contributions).unwrap();
    federation::broadcast(&mut agents, &global).unwrap();
    let reference: (Vec<f64>, Array2<f64>) = agents[0].q_values(&refs);
    for a in &agents[1..] {
        assert_eq!(a.q_values(&refs), reference);
    }
}

#[test]
fn bench_writes_one_row_per_sample() {
    let mut cfg = ExperimentConfig::desk();
    cfg.bench.samples = 120;
    let dir = tempfile::tempdir().unwrap();
    let cdf = commands::bench(&cfg, &fresh_checkpoint(&cfg), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("inference_cdf.csv")).unwrap();
    assert_eq!(text.lines().count(), 121);
    assert!(cdf.p50 <= cdf.p90 && cdf.p90 <= cdf.p99);
}

fn palcas() -> Command {
    Command::new(env!("CARGO_BIN_EXE_palcas"))
}

#[test]
fn cli_reports_errors_by_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("desk.toml");
    let status = palcas().args(["export-config", "--preset", "desk", "--out"]).arg(&config).status().unwrap();
    assert!(status.success());
    assert_eq!(ExperimentConfig::load(&config).unwrap(), ExperimentConfig::desk());

    // a checkpoint from a different architecture is a schema error
    let toy = ExperimentConfig::toy();
    let ckpt_path = dir.path().join("toy.bin");
    fresh_checkpoint(&toy).save(&ckpt_path).unwrap();
    let out = palcas().arg("eval").arg(&config).arg(&ckpt_path).arg("--out").arg(dir.path().join("eval")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // an unknown key is a configuration error
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nepisodez = 3\n").unwrap();
    let out = palcas().arg("train").arg(&bad).arg("--out").arg(dir.path().join("train")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("episodez"));
}

//! The operations behind the command-line tool, usable from library code.
//! Each writes its CSV outputs into an output directory and returns the
//! in-memory results.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::export;
use crate::federation::RoundReport;
use crate::metrics::{inference_cdf, space_time_grid, InferenceCdf, MetricsReport};
use crate::pdqn::Checkpoint;
use crate::runner::{bench_inference, evaluate, load_agents, Evaluation, GreedyPolicy, Trainer};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ROUNDS_FILE: &str = "rounds.csv";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub reports: Vec<RoundReport>,
}

/// Trains every configured round, rewriting `rounds.csv` (and
/// `validation.csv` when validation is enabled) and the checkpoint after
/// each one so an interrupted run leaves usable files.
pub fn train(cfg: &ExperimentConfig, out: &Path, mut on_round: impl FnMut(&RoundReport)) -> Result<TrainOutput> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let mut trainer = Trainer::new(cfg)?;
    let mut reports = Vec::new();
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    while trainer.rounds_done() < cfg.training.rounds {
        let r = trainer.run_round()?;
        reports.push(r);
        export::write_rounds(create(out, ROUNDS_FILE)?, trainer.rows())?;
        if cfg.training.validation_episodes > 0 {
            export::write_validation(create(out, "validation.csv")?, &reports)?;
        }
        trainer.checkpoint()?.save(&checkpoint_path)?;
        on_round(reports.last().expect("just pushed"));
    }
    if reports.is_empty() {
        export::write_rounds(create(out, ROUNDS_FILE)?, trainer.rows())?;
        trainer.checkpoint()?.save(&checkpoint_path)?;
    }
    Ok(TrainOutput { checkpoint: trainer.checkpoint()?, checkpoint_path, reports })
}

/// Greedy evaluation of a checkpoint. Writes `metrics.csv`,
/// `episodes.csv` and, for the first episode, `events.csv`,
/// `trajectory.csv`, `spacetime.csv` and `rewards.csv`
/// (plus `observations.csv` when enabled).
pub fn eval(cfg: &ExperimentConfig, ckpt: &Checkpoint, out: &Path) -> Result<Evaluation> {
    let mut policy = GreedyPolicy { agents: load_agents(cfg, ckpt)? };
    let ev = evaluate(cfg, &mut policy)?;
    write_evaluation(cfg, &ev, out)?;
    Ok(ev)
}

pub fn write_evaluation(cfg: &ExperimentConfig, ev: &Evaluation, out: &Path) -> Result<()> {
    export::write_metrics(create(out, "metrics.csv")?, &ev.report)?;
    export::write_episode_metrics(create(out, "episodes.csv")?, &ev.episodes)?;
    let first = &ev.first;
    export::write_events(create(out, "events.csv")?, &first.events)?;
    export::write_trajectory(create(out, "trajectory.csv")?, &first.trajectory)?;
    let (bx, bt) = (cfg.output.spacetime_bin_x, cfg.output.spacetime_bin_t);
    let grid = space_time_grid(&first.trajectory, bx, bt, cfg.road.mainline_length, first.duration.max(bt));
    export::write_spacetime(create(out, "spacetime.csv")?, &grid, bx, bt)?;
    export::write_rewards(create(out, "rewards.csv")?, &first.rewards)?;
    if cfg.output.dump_observations {
        export::write_observations(create(out, "observations.csv")?, &first.observations)?;
    }
    Ok(())
}

pub struct AblationOutput {
    pub full: Evaluation,
    pub ablated: Evaluation,
}

/// Trains and evaluates the full reward and the reward without the
/// lane-change component under identical seeds and budget, into `full/`
/// and `ablated/`, and writes a side-by-side `comparison.csv`.
pub fn ablate(cfg: &ExperimentConfig, out: &Path, mut on_round: impl FnMut(&str, &RoundReport)) -> Result<AblationOutput> {
    let mut run = |name: &str, disable: bool| -> Result<Evaluation> {
        let c = ExperimentConfig { disable_priority_reward: disable, ..cfg.clone() };
        let dir = out.join(name);
        let trained = train(&c, &dir, |r| on_round(name, r))?;
        eval(&c, &trained.checkpoint, &dir)
    };
    let full = run("full", false)?;
    let ablated = run("ablated", true)?;
    export::write_comparison(create(out, "comparison.csv")?, &full.report, &ablated.report)?;
    Ok(AblationOutput { full, ablated })
}

/// Times `cfg.bench.samples` decision rounds and writes `inference_cdf.csv`.
pub fn bench(cfg: &ExperimentConfig, ckpt: &Checkpoint, out: &Path) -> Result<InferenceCdf> {
    let samples = bench_inference(cfg, ckpt)?;
    let cdf = inference_cdf(&samples)
        .ok_or_else(|| crate::PalcasError::Config("bench.samples must be positive".into()))?;
    export::write_inference_cdf(create(out, "inference_cdf.csv")?, &cdf)?;
    Ok(cdf)
}

/// Mean of one metric, if defined.
pub fn mean_of(report: &MetricsReport, metric: &str) -> Option<f64> {
    report.get(metric).and_then(|m| m.mean)
}

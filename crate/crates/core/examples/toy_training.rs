//! Trains a single agent on the 400 m toy road, where one CAV starts in the
//! leftmost lane and must reach lane 1 before the off-ramp at 300 m, then
//! compares the best validated model's exit success against a
//! uniform-random policy.
//!
//! `cargo run --release --example toy_training`

use palcas::config::ExperimentConfig;
use palcas::runner::{derive_seed, evaluate, load_agents, GreedyPolicy, RandomPolicy, SeedStream, Trainer};

fn main() -> palcas::Result<()> {
    let cfg = ExperimentConfig::toy();
    let mut trainer = Trainer::new(&cfg)?;
    let mut steps = 0;
    trainer.train(|r| {
        let row = &r.rows[0];
        let v = r.validation.as_ref();
        steps += r.ticks + v.map_or(0, |v| v.ticks);
        println!(
            "round {:>2}  ticks {:>5}  transitions {:>5}  loss {:.4}  epsilon {:.3}  validation DSR {:>5.1}{}",
            r.round,
            r.ticks,
            row.n_k,
            row.mean_loss,
            row.epsilon,
            v.and_then(|v| v.dsr).unwrap_or(f64::NAN),
            if v.is_some_and(|v| v.selected) { " *" } else { "" }
        );
    })?;

    let mut greedy = GreedyPolicy { agents: load_agents(&cfg, &trainer.checkpoint()?)? };
    let learned = evaluate(&cfg, &mut greedy)?;
    let mut random = RandomPolicy::new(derive_seed(cfg.seed, SeedStream::Policy, 0));
    let baseline = evaluate(&cfg, &mut random)?;

    let dsr = |e: &palcas::runner::Evaluation| e.report.get("dsr").and_then(|m| m.mean).unwrap_or(f64::NAN);
    println!("environment steps, validation included: {steps}");
    println!("DSR learned {:.1}%  random {:.1}%", dsr(&learned), dsr(&baseline));
    Ok(())
}

//! Aggregates three agents' weights with sample-size weighting, broadcasts
//! the result and checks that every agent now holds the same model.
//!
//! `cargo run --release --example fedavg_round`

use palcas::federation::{self, Contribution};
use palcas::pdqn::{LearnerConfig, PdqnAgent};

fn main() -> palcas::Result<()> {
    let cfg = LearnerConfig { hidden: vec![32, 32], ..LearnerConfig::default() };
    let mut agents = (0..3).map(|k| PdqnAgent::new(cfg.clone(), 100 + k)).collect::<palcas::Result<Vec<_>>>()?;
    let samples = [1200, 300, 0];
    let contributions: Vec<Contribution> = agents
        .iter()
        .zip(samples)
        .enumerate()
        .map(|(agent_id, (a, samples))| Contribution { agent_id, weights: a.export_weights(), samples })
        .collect();
    for c in &contributions {
        println!("agent {} contributes {} samples, checksum {:016x}", c.agent_id, c.samples, c.weights.checksum());
    }

    let global = federation::aggregate(&contributions)?;
    let first = &global.tensors[0];
    let (a, b) = (&contributions[0].weights.tensors[0], &contributions[1].weights.tensors[0]);
    println!(
        "\n{}[0]: 0.8 * {:.6} + 0.2 * {:.6} = {:.6}",
        first.name, a.data[0], b.data[0], first.data[0]
    );

    let sums = federation::broadcast(&mut agents, &global)?;
    println!("global checksum {:016x}", global.checksum());
    for (k, s) in sums.iter().enumerate() {
        println!("agent {k} after broadcast      {s:016x}");
    }
    Ok(())
}

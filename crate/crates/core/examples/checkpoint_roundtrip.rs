//! Saves an agent's networks to the binary checkpoint format, reloads
//! them and confirms identical Q-values; then shows the schema error for
//! a checkpoint built with a different architecture.
//!
//! `cargo run --release --example checkpoint_roundtrip`

use palcas::config::ExperimentConfig;
use palcas::observe::{Observation, OBS_DIM};
use palcas::pdqn::{Checkpoint, PdqnAgent};
use palcas::runner::{load_agents, pack_checkpoint};

fn main() -> palcas::Result<()> {
    let cfg = ExperimentConfig::toy();
    let agent = PdqnAgent::new(cfg.learner.clone(), 7)?;
    let ckpt = pack_checkpoint(&[agent.export_weights()])?;

    let dir = std::env::temp_dir().join("palcas-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.bin");
    ckpt.save(&path)?;
    println!("wrote {} ({} bytes, signature {})", path.display(), ckpt.encoded_len(), ckpt.signature);

    let restored = load_agents(&cfg, &Checkpoint::load(&path)?)?;
    let obs = Observation(std::array::from_fn(|i| ((i as f64) / OBS_DIM as f64) - 0.5));
    let (q0, _) = agent.q_values(&[&obs]);
    let (q1, _) = restored[0].q_values(&[&obs]);
    println!("Q before {q0:?}\nQ after  {q1:?}\nidentical: {}", q0 == q1);

    let mut other = cfg.clone();
    other.learner.hidden = vec![32];
    match load_agents(&other, &ckpt) {
        Err(e) => println!("loading into a different architecture: {e}"),
        Ok(_) => println!("unexpectedly loaded"),
    }
    Ok(())
}

//! Encodes the observation of every controlled CAV after 30 s of desk
//! traffic and prints the labeled vector of the first one.
//!
//! `cargo run --release --example observation_dump`

use palcas::action::HybridAction;
use palcas::config::ExperimentConfig;
use palcas::observe;
use palcas::runner::{Environment, SeedStream};

fn main() -> palcas::Result<()> {
    let cfg = ExperimentConfig::desk().with_penetration(0.4);
    let mut env = Environment::new(&cfg, SeedStream::EvalEpisode)?;
    while env.world().time() < 30.0 {
        let hold: Vec<_> = env.controlled().concat().into_iter().map(|id| (id, HybridAction::hold())).collect();
        env.step(&hold)?;
    }
    let stats = env.cluster_stats();
    for (k, ids) in env.controlled().iter().enumerate() {
        println!("agent {k}: {} CAVs, cluster mean speed {:.2} m/s", ids.len(), stats[k].mean_speed);
    }
    let Some(&id) = env.controlled().iter().flatten().next() else {
        println!("no CAV on the road");
        return Ok(());
    };
    let obs = env.observe(&[id], &stats)?[0];
    println!("\nobservation of vehicle {id}");
    for (label, x) in observe::labels().iter().zip(obs.as_slice()) {
        println!("  {label:<24} {x:>9.5}");
    }
    Ok(())
}

//! Runs one desk-scale episode with every vehicle driven by the
//! rule-based driver and summarizes the event log.
//!
//! `cargo run --release --example microsim_episode`

use std::collections::BTreeMap;

use palcas::config::ExperimentConfig;
use palcas::runner::{run_episode, Environment, RuleBasedPolicy, SeedStream};

fn main() -> palcas::Result<()> {
    let cfg = ExperimentConfig::desk().with_penetration(0.2);
    let mut env = Environment::new(&cfg, SeedStream::EvalEpisode)?;
    let rec = run_episode(&mut env, &mut RuleBasedPolicy, 0, false)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &rec.events {
        *counts.entry(e.kind.as_str()).or_default() += 1;
    }
    println!("simulated {:.1} s on a {} m road", rec.duration, cfg.road.mainline_length);
    for (kind, n) in counts {
        println!("  {kind:<20} {n}");
    }
    let m = &rec.metrics;
    println!("efficiency {:?} m/s", m.efficiency);
    println!("collision rate {:?} %  over {} CAVs", m.collision_rate, m.spawned_cavs);
    println!("DSR {:?} % (n={}, unresolved {})", m.dsr, m.dsr_denominator, m.dsr_unresolved);
    println!("MSR {:?} % (n={}, unresolved {})", m.msr, m.msr_denominator, m.msr_unresolved);
    Ok(())
}

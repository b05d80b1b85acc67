use std::time::Instant;

use super::{load_agents, Environment, SeedStream};
use crate::action::HybridAction;
use crate::config::ExperimentConfig;
use crate::error::{PalcasError, Result};
use crate::observe::Observation;
use crate::pdqn::Checkpoint;
use crate::road::{Entry, Exit, Route};
use crate::vehicle::{Vehicle, VehicleKind};

/// Rebuild the benchmark scene after this many decision rounds.
const SCENE_REFRESH: usize = 50;

/// Latency, in milliseconds, of `cfg.bench.samples` decision rounds of the
/// first cluster's agent over `cfg.bench.cavs` CAVs. A decision round
/// encodes every CAV's observation and selects all actions greedily.
pub fn bench_inference(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<Vec<f64>> {
    let mut agents = load_agents(cfg, ckpt)?;
    let mut env = Environment::new(
        &ExperimentConfig { spawn: crate::sim::SpawnConfig { mainline_flow: 0.0, ramp_flow: 0.0, ..cfg.spawn }, ..cfg.clone() },
        SeedStream::Bench,
    )?;
    let mut samples = Vec::with_capacity(cfg.bench.samples);
    let mut round = 0u64;
    while samples.len() < cfg.bench.samples {
        if samples.len() % SCENE_REFRESH == 0 {
            populate(&mut env, cfg, round)?;
            round += 1;
        }
        let ids = env.controlled().into_iter().next().unwrap_or_default();
        let clock = Instant::now();
        let stats = env.cluster_stats();
        let obs = env.observe(&ids, &stats)?;
        let refs: Vec<&Observation> = obs.iter().collect();
        let actions = agents[0].act(&refs, false)?;
        samples.push(clock.elapsed().as_secs_f64() * 1e3);
        let hold: Vec<(u64, HybridAction)> = ids.iter().map(|&id| (id, HybridAction::hold())).collect();
        std::hint::black_box(actions);
        env.step(&hold)?;
    }
    Ok(samples)
}

/// Fills the first cluster with CAVs on a staggered grid.
fn populate(env: &mut Environment, cfg: &ExperimentConfig, round: u64) -> Result<()> {
    env.start_episode(round);
    let net = env.network().clone();
    let zone = net.cluster(1).ok_or_else(|| PalcasError::Config("road has no cluster".into()))?.clone();
    let lanes = net.lane_count() as usize;
    let per_lane = cfg.bench.cavs.div_ceil(lanes).max(1);
    let spacing = (zone.length() - 60.0) / per_lane as f64;
    let v = 0.8 * net.speed_limit();
    for i in 0..cfg.bench.cavs {
        let lane = (i % lanes) as u8 + 1;
        let slot = i / lanes;
        let x = zone.start + 10.0 + spacing * slot as f64 + 3.0 * lane as f64;
        let route = if i % 2 == 0 {
            Route::new(Entry::Mainline, Exit::OffRamp(1))
        } else {
            Route::new(Entry::Mainline, Exit::HighwayEnd)
        };
        let car = Vehicle::new(0, VehicleKind::Cav, x, lane, v, net.speed_limit(), route, &net);
        env.world_mut().insert_vehicle(car);
    }
    Ok(())
}

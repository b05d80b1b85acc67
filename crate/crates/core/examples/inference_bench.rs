//! Times 3000 greedy decision rounds for 20 CAVs in one cluster with
//! freshly initialized desk-scale networks and prints the latency
//! quantiles.
//!
//! `cargo run --release --example inference_bench`

use palcas::config::ExperimentConfig;
use palcas::metrics::inference_cdf;
use palcas::pdqn::PdqnAgent;
use palcas::runner::{bench_inference, pack_checkpoint};

fn main() -> palcas::Result<()> {
    let cfg = ExperimentConfig::desk();
    let agent = PdqnAgent::new(cfg.learner.clone(), 1)?;
    let ckpt = pack_checkpoint(&[agent.export_weights()])?;
    let samples = bench_inference(&cfg, &ckpt)?;
    let cdf = inference_cdf(&samples).expect("samples were requested");
    println!("{} decision rounds over {} CAVs", samples.len(), cfg.bench.cavs);
    println!("p50 {:.3} ms  p90 {:.3} ms  p99 {:.3} ms", cdf.p50, cdf.p90, cdf.p99);
    Ok(())
}

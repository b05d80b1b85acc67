use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use palcas::commands::{self, mean_of};
use palcas::config::ExperimentConfig;
use palcas::pdqn::Checkpoint;
use palcas::runner::Evaluation;
use palcas::{PalcasError, Result};

#[derive(Parser)]
#[command(name = "palcas", version, about = "Federated lane-change advisory: train, evaluate and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Federated training; writes rounds.csv and checkpoint.bin.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint; writes metrics and trace CSVs.
    Eval {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Trains and evaluates with and without the lane-change reward.
    Ablate {
        config: PathBuf,
        #[arg(long, default_value = "runs/ablate")]
        out: PathBuf,
    },
    /// Times greedy decision rounds; writes inference_cdf.csv.
    BenchInference {
        checkpoint: PathBuf,
        /// Defaults to config.toml beside the checkpoint, then the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/bench")]
        out: PathBuf,
    },
    /// Prints a preset configuration as TOML.
    ExportConfig {
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
    Toy,
}

fn print_report(label: &str, ev: &Evaluation) {
    println!("{label}");
    for r in &ev.report.rows {
        match (r.mean, r.std) {
            (Some(m), Some(s)) => println!("  {:<20} {m:>10.3} ± {s:.3}  (n={})", r.metric, r.n),
            (Some(m), None) => println!("  {:<20} {m:>10.3}  (n={})", r.metric, r.n),
            _ => println!("  {:<20} {:>10}", r.metric, "absent"),
        }
    }
}

fn bench_config(explicit: Option<&Path>, checkpoint: &Path) -> Result<ExperimentConfig> {
    if let Some(p) = explicit {
        return ExperimentConfig::load(p);
    }
    let beside = checkpoint.with_file_name("config.toml");
    if beside.is_file() {
        ExperimentConfig::load(&beside)
    } else {
        Ok(ExperimentConfig::desk())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let t = commands::train(&cfg, &out, |r| {
                for row in &r.rows {
                    println!(
                        "round {:>4} agent {} n_k {:>6} loss {:.5} epsilon {:.4}",
                        r.round, row.agent_id, row.n_k, row.mean_loss, row.epsilon
                    );
                }
            })?;
            println!("checkpoint {}", t.checkpoint_path.display());
        }
        Command::Eval { config, checkpoint, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ev = commands::eval(&cfg, &ckpt, &out)?;
            print_report("evaluation", &ev);
        }
        Command::Ablate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let a = commands::ablate(&cfg, &out, |name, r| println!("{name} round {}", r.round))?;
            print_report("full reward", &a.full);
            print_report("without lane-change reward", &a.ablated);
            for m in ["collision_rate", "dsr"] {
                println!("{m}: full {:?} ablated {:?}", mean_of(&a.full.report, m), mean_of(&a.ablated.report, m));
            }
        }
        Command::BenchInference { checkpoint, config, out } => {
            let cfg = bench_config(config.as_deref(), &checkpoint)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let cdf = commands::bench(&cfg, &ckpt, &out)?;
            println!(
                "{} samples  p50 {:.3} ms  p90 {:.3} ms  p99 {:.3} ms",
                cdf.points.len(),
                cdf.p50,
                cdf.p90,
                cdf.p99
            );
        }
        Command::ExportConfig { preset, out } => {
            let cfg = match preset {
                Preset::Full => ExperimentConfig::default(),
                Preset::Desk => ExperimentConfig::desk(),
                Preset::Toy => ExperimentConfig::toy(),
            };
            let text = cfg.to_toml()?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                PalcasError::Schema(_) => 2,
                PalcasError::Config(_) => 3,
                _ => 1,
            })
        }
    }
}

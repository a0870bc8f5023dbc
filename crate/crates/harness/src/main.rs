use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use autolfd::commands::{self, AssertionFailure};
use autolfd::config::{ExperimentConfig, Overrides};
use clap::{Parser, Subcommand};

/// Automatic hyperparameter tuning for learning-from-demonstration primitives.
#[derive(Debug, Parser)]
#[command(name = "autolfd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the letter corpus.
    GenData,
    /// Synthesize triplets and train the trajectory encoder.
    TrainEncoder,
    /// Show that trajectory-level metrics can rank adaptations against their shape.
    MetricFailure,
    /// Tune hyperparameters of one adaptation against the latent metric.
    Auto,
    /// Compare descent from two initial points with Bayesian optimization.
    Compare,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("AUTOLFD_THREADS") {
        let n: usize = v.parse().with_context(|| format!("AUTOLFD_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let overrides = Overrides { seed: cli.seed, out: cli.out.clone() };
    let cfg = ExperimentConfig::resolve(cli.config.as_deref(), &overrides)?;
    let out = cfg.out.display();
    match cli.command {
        Command::GenData => {
            let m = commands::gen_data(&cfg)?;
            println!("wrote {} letter files to {out}/letters, corpus sha256 {}", m.files.len(), m.corpus_sha256);
        }
        Command::TrainEncoder => {
            let s = commands::cmd_train_encoder(&cfg)?;
            println!("{s}");
            println!("wrote {out}/encoder.json and {out}/training_curve.csv");
        }
        Command::MetricFailure => {
            for o in commands::metric_failure(&cfg)? {
                let p = o.pair.expect("certified outcomes carry a pair");
                println!(
                    "{} on '{}': preserving shape {:.4} cost {:.4} > breaking shape {:.4} cost {:.4}",
                    o.case.name,
                    o.case.letter,
                    p.preserving.shape_distortion.unwrap_or(f64::NAN),
                    p.preserving.cost.unwrap_or(f64::NAN),
                    p.breaking.shape_distortion.unwrap_or(f64::NAN),
                    p.breaking.cost.unwrap_or(f64::NAN),
                );
            }
        }
        Command::Auto => {
            let r = commands::auto(&cfg)?;
            println!(
                "cost {:.6} -> {:.6}, shape distortion {:.4}, wrote {out}/report.json",
                r.initial_cost, r.final_cost, r.final_metrics.shape_distortion
            );
        }
        Command::Compare => {
            for r in commands::compare(&cfg)? {
                println!("seed {} {:8} cost {:.6} shape {:.4}", r.seed, r.run, r.final_cost, r.shape_distortion);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<AssertionFailure>().is_some() => {
            eprintln!("assertion failed: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

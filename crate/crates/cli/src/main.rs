use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gripmap_cli::commands::{cmd_ablate, cmd_eval, cmd_scatter, cmd_split, cmd_synth, cmd_train, cmd_visualize};
use gripmap_cli::RunConfig;

#[derive(Parser)]
#[command(name = "gripmap", version, about = "Synthesize road-condition data, train and evaluate grip maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "gripmap.toml")]
    config: PathBuf,
    /// Overrides `seed` (and the training seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; for `synth` this is the dataset root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint to evaluate; defaults to `<out>/model.gmck`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Input modalities, e.g. `rgb,thermal,reflectance`.
    #[arg(long, global = true)]
    modalities: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes, simulate drives and write the dataset.
    Synth,
    /// Assign samples to train/val/test by geofence.
    Split,
    /// Train a model on the train split.
    Train,
    /// Evaluate a checkpoint on the configured sets.
    Eval {
        /// Evaluate the label oracle instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
    },
    /// Train and evaluate one model per modality subset.
    Ablate,
    /// Render grip overlays.
    Visualize {
        /// Sample ids; repeatable.
        #[arg(long = "sample")]
        samples: Vec<String>,
    },
    /// Export (truth, prediction) pairs.
    Scatter,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let (Some(m), false) = (&cli.modalities, matches!(cli.command, Command::Ablate)) {
        cfg.set_modalities(m)?;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir());
    let ckpt = cli.checkpoint.as_deref();
    match cli.command {
        Command::Synth => {
            let root = cli.out.unwrap_or_else(|| cfg.dataset_root.clone());
            let n = cmd_synth(&cfg, &root)?;
            println!("{n} samples");
        }
        Command::Split => {
            for (role, n) in cmd_split(&cfg)? {
                println!("{role}: {n}");
            }
        }
        Command::Train => {
            let o = cmd_train(&cfg, &out)?;
            println!("best epoch {} val loss {:.6}", o.best_epoch, o.best_val_loss);
        }
        Command::Eval { oracle } => {
            println!("modalities,set,grip_mean,grip_sd,n_samples,rmse");
            for r in cmd_eval(&cfg, ckpt, oracle, &out)? {
                println!("{},{},{:.4},{:.4},{},{:.5}", r.modalities, r.set, r.grip_mean, r.grip_sd, r.n_samples, r.rmse);
            }
        }
        Command::Ablate => {
            println!("modalities,set,grip_mean,grip_sd,n_samples,rmse");
            for r in cmd_ablate(&cfg, cli.modalities.as_deref(), &out)? {
                let r = r.report;
                println!("{},{},{:.4},{:.4},{},{:.5}", r.modalities, r.set, r.grip_mean, r.grip_sd, r.n_samples, r.rmse);
            }
        }
        Command::Visualize { samples } => {
            for o in cmd_visualize(&cfg, ckpt, &samples, &out)? {
                match o.track_bands {
                    Some(t) => println!(
                        "{} track {:.3} adjacent {:.3}",
                        o.path.display(),
                        t.track_mean,
                        t.adjacent_mean
                    ),
                    None => println!("{}", o.path.display()),
                }
            }
        }
        Command::Scatter => println!("{}", cmd_scatter(&cfg, ckpt, &out)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

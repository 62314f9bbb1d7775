use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semg_core::config::PipelineConfig;
use semg_core::dataset::{generate_synthetic, save_recording};
use semg_core::pipeline::{run_pipeline, Mode, PipelineOutcome};
use semg_core::report::{read_per_movement, stage_comparison_csv};

/// Gesture recognition from 12-channel surface EMG.
#[derive(Parser)]
#[command(name = "semg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to `out_dir` from the config, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic recording as CSV.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the synthetic data seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Destination CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate over the three repetition splits.
    Train(Common),
    /// Evaluate previously saved models without training.
    Evaluate(Common),
    /// Hyperparameter search, then train with the best parameters.
    Tune(Common),
    /// Compare target-only training with warm start from a source model.
    Transfer(Common),
    /// Run any mode by name.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["train", "evaluate", "tune", "transfer"])]
        mode: String,
    },
    /// Tabulate per-movement accuracy of several finished runs side by side.
    Report {
        /// Run directories, each holding a per_movement.csv.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Column names; defaults to the directory names.
        #[arg(long, num_args = 1..)]
        names: Vec<String>,
        /// Output directory for stages.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn run_mode(common: &Common, mode: Mode) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_pipeline(&cfg, mode, &out)?;
    print_outcome(&outcome, &out);
    Ok(())
}

fn print_outcome(outcome: &PipelineOutcome, out: &Path) {
    if let Some(r) = &outcome.report {
        let [a, p, rec, f] = r.mean_metrics();
        println!("accuracy {a:.4}  precision {p:.4}  recall {rec:.4}  f1 {f:.4}");
    }
    if let Some(study) = &outcome.study {
        if let Some(best) = study.best_trial() {
            println!("best trial {} objective {:.4}", best.number, best.objective.unwrap_or(f64::NAN));
        }
    }
    if let Some(t) = &outcome.transfer {
        println!("transfer before {:.4}  after {:.4}", t.mean_before(), t.mean_after());
    }
    println!("results in {}", out.display());
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let mut spec = cfg.data.synthetic;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let rec = generate_synthetic(&spec)?;
            save_recording(&rec, &out)?;
            println!("wrote {} samples to {}", rec.len(), out.display());
        }
        Command::Train(c) => run_mode(&c, Mode::Train)?,
        Command::Evaluate(c) => run_mode(&c, Mode::Evaluate)?,
        Command::Tune(c) => run_mode(&c, Mode::Tune)?,
        Command::Transfer(c) => run_mode(&c, Mode::Transfer)?,
        Command::Run { common, mode } => run_mode(&common, mode.parse()?)?,
        Command::Report { runs, names, out } => {
            if !names.is_empty() && names.len() != runs.len() {
                bail!("{} names given for {} runs", names.len(), runs.len());
            }
            let mut columns = Vec::new();
            for (i, dir) in runs.iter().enumerate() {
                let name = names.get(i).cloned().unwrap_or_else(|| {
                    dir.file_name().map_or_else(|| format!("run{}", i + 1), |n| n.to_string_lossy().into_owned())
                });
                columns.push((name, read_per_movement(&dir.join("per_movement.csv"))?));
            }
            std::fs::create_dir_all(&out)?;
            let path = out.join("stages.csv");
            semg_core::io::write_atomic(&path, stage_comparison_csv(&columns)?.as_bytes())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

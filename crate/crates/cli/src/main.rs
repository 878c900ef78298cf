//! Command-line driver for the wavelet/chaos enhancement and
//! classification pipeline.
//!
//! Configuration comes from an optional JSON file, then `--set key=value`
//! overrides, then dedicated flags; later sources win. Every subcommand
//! validates the resulting configuration before touching the filesystem.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chaoswave::chaos::ChaosState;
use chaoswave::eval::report::{ablation_summary, summary_table};
use chaoswave::pipeline::{self, PipelineConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chaoswave", version, about = "Chaos-modulated wavelet enhancement and CNN classification")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (dotted path), e.g. `train.max_epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Work directory; stage outputs go to its versioned layout.
    #[arg(long, env = "CHAOSWAVE_WORK_DIR", global = true)]
    work_dir: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resize, normalize and augment labelled PGM images into a dataset.
    Preprocess {
        /// Directory with the images and the labels CSV (`file,label[,source_id]`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Integrate the chaotic system and export `t,z1,z2,z3` as CSV.
    ChaosSim {
        /// Simulated time after burn-in.
        #[arg(long, default_value_t = 100.0)]
        duration: f64,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        burn_in: Option<usize>,
        /// Initial state as `z1,z2,z3`.
        #[arg(long, value_parser = parse_state)]
        initial: Option<ChaosState>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Apply the wavelet/chaos enhancement to every image of a manifest.
    Enhance {
        /// Defaults to the preprocessed dataset.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write stretched difference maps.
        #[arg(long)]
        difference_maps: bool,
    },
    /// Train a classifier on every item of a manifest.
    Train {
        /// Defaults to the enhanced dataset.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, or cross-validate with `--cross-validate`.
    Evaluate {
        /// Defaults to the enhanced dataset.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to the checkpoint written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        cross_validate: bool,
    },
    /// Cross-validate with and without chaotic modulation and compare.
    Ablate {
        /// Un-enhanced dataset; defaults to the preprocessed dataset.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn parse_state(raw: &str) -> Result<ChaosState, String> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [z1, z2, z3] => Ok(ChaosState::new(z1, z2, z3)),
        _ => Err(format!("expected z1,z2,z3, got {raw:?}")),
    }
}

fn build_config(global: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply_overrides(&global.overrides)?;
    if let Some(dir) = &global.work_dir {
        config.work_dir = dir.clone();
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = build_config(&cli.global)?;
    let layout = config.layout();
    match cli.command {
        Command::Preprocess { input } => {
            if let Some(dir) = input {
                config.input_dir = Some(dir);
            }
            config.validate()?;
            let manifest = pipeline::preprocess(&config)?;
            println!("manifest: {}", manifest.display());
        }
        Command::ChaosSim { duration, step, burn_in, initial, output } => {
            config.validate()?;
            let trajectory = pipeline::simulate_chaos(
                &config.chua,
                initial.unwrap_or(config.modulation.chaos_initial),
                step.unwrap_or(config.modulation.chaos_step),
                burn_in.unwrap_or(config.modulation.chaos_burn_in),
                duration,
            )?;
            let path = output.unwrap_or_else(|| layout.chaos_dir().join("trajectory.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            trajectory.write_csv(std::io::BufWriter::new(file))?;
            println!("trajectory: {} ({} samples)", path.display(), trajectory.samples.len());
        }
        Command::Enhance { manifest, difference_maps } => {
            config.difference_maps |= difference_maps;
            config.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.dataset_manifest());
            require_file(&manifest, "manifest")?;
            let out = pipeline::enhance(&config, &manifest)?;
            println!("manifest: {}", out.display());
        }
        Command::Train { manifest } => {
            config.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.enhanced_manifest());
            require_file(&manifest, "manifest")?;
            let ckpt = pipeline::train_stage(&config, &manifest)?;
            println!("checkpoint: {}", ckpt.display());
        }
        Command::Evaluate { manifest, checkpoint, cross_validate } => {
            config.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.enhanced_manifest());
            require_file(&manifest, "manifest")?;
            if cross_validate {
                let report = pipeline::cross_validate_stage(&config, &manifest)?;
                print!("{}", summary_table(&report));
            } else {
                let checkpoint = checkpoint.unwrap_or_else(|| layout.checkpoint());
                require_file(&checkpoint, "checkpoint")?;
                let e = pipeline::evaluate_checkpoint(&config, &manifest, &checkpoint)?;
                let m = e.metrics;
                let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.2}"));
                println!("items {}  TP {} FP {} TN {} FN {}", e.items, e.confusion.tp, e.confusion.fp, e.confusion.tn, e.confusion.fn_);
                println!(
                    "ACC {}  SEN {}  SPE {}  P {}  FPR {}  F1 {}  AUC {}",
                    show(m.acc),
                    show(m.sen),
                    show(m.spe),
                    show(m.precision),
                    show(m.fpr),
                    show(m.f1),
                    m.auc.map_or("undefined".to_string(), |v| format!("{v:.4}"))
                );
            }
        }
        Command::Ablate { manifest } => {
            config.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.dataset_manifest());
            require_file(&manifest, "manifest")?;
            let report = pipeline::ablate(&config, &manifest)?;
            print!("{}", ablation_summary(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `speckle`: simulate speckle datasets, train decoders, run experiments.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use speckle_core::eval::Preset;
use speckle_core::kv::KvMap;
use speckle_core::nn::{Architecture, Target};

use commands::{Context, Split};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "speckle", version, about = "Speckle-based multimodal sensing: simulate, train, evaluate")]
struct Cli {
    /// `key = value` overrides applied on top of the preset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use this single seed instead of the preset's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// desk-scale or paper-scale.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Keep wall-clock values out of written artifacts.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tune material gains to the reference speckle correlations.
    Calibrate {
        #[arg(long, default_value_t = 8)]
        probes: usize,
    },
    /// Render the training and/or test sweep into dataset files.
    Gen {
        #[arg(long, value_enum, default_value = "all")]
        split: Split,
        /// Also export the first N camera frames of each split as PGM.
        #[arg(long, default_value_t = 0)]
        pgm: usize,
    },
    /// Train a model on a dataset file.
    Train {
        /// Defaults to <out>/train.spkd.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "decoder")]
        arch: Architecture,
        /// Comma-separated regression targets (default: all three).
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<Target>>,
        /// Shape classes for the classifier branch (0 = none).
        #[arg(long, default_value_t = 0)]
        classes: usize,
    },
    /// Evaluate a model on a dataset file.
    Eval {
        /// Defaults to <out>/model.spkm.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to <out>/test.spkd.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Estimate stimuli from PGM camera frames.
    Infer {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Report mean ± std single-image latency.
        #[arg(long)]
        time: bool,
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// Error at fine and coarse training intervals.
    ExpIntervals {
        /// Coarse depth,position,temperature steps.
        #[arg(long, value_delimiter = ',')]
        coarse: Option<Vec<f64>>,
    },
    /// Error as a function of the number of training samples.
    ExpSamples {
        /// Default: N_d/4, N_d, 2·N_d.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        steps: u64,
    },
    /// Error of day-0 models on drifted test data.
    ExpDrift {
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30")]
        days: Vec<f64>,
    },
    /// Joint depth regression and shape classification.
    ExpShapes,
    /// Four-position touch classification in interface mode.
    ExpInterface {
        /// Press centers in µm.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        centers: Option<Vec<f64>>,
    },
    /// Error across downsampling fractions and crop sizes.
    ExpResize {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1.0")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        crops: Vec<usize>,
    },
    /// CNN decoder against the linear baseline.
    Compare,
}

fn load_preset(cli: &Cli) -> Result<Preset, CliError> {
    let overrides = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
            let kv = KvMap::parse(&text).map_err(|e| CliError::from(e).context(path.display()))?;
            // A run manifest carries its configuration under `config.`.
            let section = kv.section("config");
            Some(if section.is_empty() { kv } else { section })
        }
        None => None,
    };
    let name = cli
        .preset
        .clone()
        .or_else(|| overrides.as_ref().and_then(|k| k.get_str("preset").map(str::to_string)))
        .unwrap_or_else(|| "desk-scale".into());
    let mut preset = Preset::by_name(&name)?;
    if let Some(kv) = &overrides {
        preset.apply_kv(kv).map_err(|e| CliError::from(e).context("config"))?;
    }
    if let Some(s) = cli.seed {
        preset.seeds = vec![s];
    }
    Ok(preset)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, usize::from),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = Context {
        preset: load_preset(&cli)?,
        out: cli.out.clone(),
        force: cli.force,
        reproducible: cli.reproducible,
        threads,
        argv: std::env::args().skip(1).collect(),
        started: Instant::now(),
    };
    match cli.command {
        Command::Calibrate { probes } => commands::calibrate(&ctx, probes),
        Command::Gen { split, pgm } => commands::gen(&ctx, split, pgm),
        Command::Train {
            data,
            arch,
            targets,
            classes,
        } => commands::train(&ctx, data, arch, targets, classes),
        Command::Eval { model, data } => commands::eval(&ctx, model, data),
        Command::Infer {
            model,
            images,
            time,
            runs,
        } => commands::infer(&ctx, model, &images, time, runs),
        Command::ExpIntervals { coarse } => commands::exp_intervals(&ctx, coarse),
        Command::ExpSamples { sizes, steps } => commands::exp_samples(&ctx, sizes, steps),
        Command::ExpDrift { days } => commands::exp_drift(&ctx, &days),
        Command::ExpShapes => commands::exp_shapes(&ctx),
        Command::ExpInterface { centers } => commands::exp_interface(&ctx, centers),
        Command::ExpResize { fractions, crops } => commands::exp_resize(&ctx, &fractions, &crops),
        Command::Compare => commands::compare(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

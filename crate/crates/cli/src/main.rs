//! `wingbeat`: screen insect release containers for female contamination
//! from audio.
//!
//! Exit codes: 0 success, 2 configuration or usage, 3 I/O, 4 data contract
//! (bad audio, manifest, features or models), 5 solver non-convergence.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wingbeat::scoring::Detector;
use wingbeat::{Error, ErrorClass, Result};

use crate::commands::ScoreInput;
use crate::config::{Extractor, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "wingbeat",
    version,
    about = "Detect females in male-only mosquito release containers from audio"
)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectorChoice {
    Iforest,
    Ocsvm,
    Both,
}

impl DetectorChoice {
    fn detectors(self) -> Vec<Detector> {
        match self {
            DetectorChoice::Iforest => vec![Detector::Iforest],
            DetectorChoice::Ocsvm => vec![Detector::Ocsvm],
            DetectorChoice::Both => Detector::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Day whose models to use; may be omitted when only one day was trained.
    #[arg(long)]
    day: Option<u32>,
    #[arg(long, value_enum, default_value_t = DetectorChoice::Both)]
    detector: DetectorChoice,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated days since sexing.
        #[arg(long, value_delimiter = ',')]
        days: Option<Vec<u32>>,
        /// Clips per container and day.
        #[arg(long)]
        clips: Option<usize>,
    },
    /// Fit one detector pair per day on the manifest's male training clips.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Embedding CSV to train on instead of audio.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Isolation forest seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score one recording and print a verdict per detector.
    Score {
        #[arg(long, required_unless_present = "clip")]
        wav: Option<PathBuf>,
        /// Clip of the embedding file to score instead of a recording.
        #[arg(long, requires = "features", conflicts_with = "wav")]
        clip: Option<String>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
        /// Directory for the per-window score trace CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every test clip of a manifest and write the accuracy table.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a spectrogram with the score traces of one recording as PNG.
    Plot {
        #[arg(long)]
        wav: PathBuf,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long, default_value = "figure.png")]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn apply_models(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(d) = &m.models_dir {
        cfg.paths.models_dir = d.clone();
    }
    if let Some(t) = m.threshold {
        cfg.pipeline.threshold = t;
    }
}

fn apply_features(cfg: &mut RunConfig, features: &Option<PathBuf>) {
    if let Some(f) = features {
        cfg.paths.features = Some(f.clone());
        cfg.extractor = Extractor::External;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth {
            out,
            seed,
            days,
            clips,
        } => {
            if let Some(o) = out {
                cfg.paths.out = o;
            }
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            if let Some(d) = days {
                cfg.synth.days = d;
            }
            if let Some(c) = clips {
                cfg.synth.clips_per_container = c;
            }
            cfg.validate()?;
            commands::synth(&cfg)
        }
        Command::Train {
            manifest,
            models_dir,
            features,
            seed,
        } => {
            if let Some(m) = manifest {
                cfg.paths.manifest = Some(m);
            }
            if let Some(d) = models_dir {
                cfg.paths.models_dir = d;
            }
            if let Some(s) = seed {
                cfg.iforest.seed = s;
            }
            apply_features(&mut cfg, &features);
            cfg.validate()?;
            commands::train(&cfg)
        }
        Command::Score {
            wav,
            clip,
            features,
            models,
            out,
        } => {
            apply_models(&mut cfg, &models);
            apply_features(&mut cfg, &features);
            cfg.validate()?;
            let input = match (wav, clip) {
                (Some(w), _) => ScoreInput::Wav(w),
                (None, Some(c)) => ScoreInput::Clip(c),
                (None, None) => return Err(Error::InvalidConfig("give --wav or --clip".into())),
            };
            commands::score(
                &cfg,
                &input,
                models.day,
                &models.detector.detectors(),
                out.as_deref(),
            )
        }
        Command::Evaluate {
            manifest,
            features,
            models,
            out,
        } => {
            if let Some(m) = manifest {
                cfg.paths.manifest = Some(m);
            }
            if let Some(o) = out {
                cfg.paths.out = o;
            }
            apply_models(&mut cfg, &models);
            apply_features(&mut cfg, &features);
            cfg.validate()?;
            commands::evaluate_cmd(&cfg, &models.detector.detectors())
        }
        Command::Plot { wav, models, out } => {
            apply_models(&mut cfg, &models);
            cfg.validate()?;
            commands::plot(&cfg, &wav, models.day, &models.detector.detectors(), &out)
        }
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::DataContract => 4,
        ErrorClass::Convergence => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

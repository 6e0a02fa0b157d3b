//! Subcommand implementations. Each takes the effective configuration
//! (file plus flag overrides) and returns a core error on failure.

use std::path::{Path, PathBuf};

use serde::Serialize;
use wingbeat::audio_io::{load_analysis_clip, MonoClip};
use wingbeat::eval::{evaluate, render_csv, render_text, DatasetManifest};
use wingbeat::features::{load_embeddings, SpectralExtractor};
use wingbeat::scoring::{
    decisions_long_csv, decisions_summary_csv, score_clip_all, score_feature_matrix,
    score_features_daily, score_manifest_daily, ClipDecision, DailyDetectors, DecisionReport,
    Detector, TrainedDetectors,
};
use wingbeat::synth::{generate_dataset, DatasetLayout};
use wingbeat::{Error, Result};

use crate::config::{Extractor, RunConfig};
use crate::plot;

pub const TRAINING_REPORT_FILE: &str = "training_report.json";
pub const ACCURACY_TEXT_FILE: &str = "accuracy.txt";
pub const ACCURACY_CSV_FILE: &str = "accuracy.csv";
pub const DECISIONS_FILE: &str = "decisions.json";
pub const DECISIONS_LONG_FILE: &str = "decisions_long.csv";
pub const DECISIONS_SUMMARY_FILE: &str = "decisions_summary.csv";

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let layout = DatasetLayout::custom(cfg.synth.days.clone(), cfg.synth.clips_per_container);
    let out = &cfg.paths.out;
    log::info!(
        "generating {} clips into {}",
        layout.total_clips(),
        out.display()
    );
    let manifest = generate_dataset(&layout, &cfg.synth.clip, out, cfg.synth.seed)?;
    println!(
        "wrote {} clips and {}",
        manifest.entries.len(),
        out.join(wingbeat::synth::MANIFEST_FILE).display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainingReport {
    schema_version: u32,
    days: Vec<DayReport>,
}

#[derive(Debug, Serialize)]
struct DayReport {
    day: u32,
    clips: usize,
    rows: usize,
    dim: usize,
    source_hash: String,
    iforest: IforestReport,
    ocsvm: OcsvmReport,
}

#[derive(Debug, Serialize)]
struct IforestReport {
    n_trees: usize,
    subsample_size: usize,
    height_limit: usize,
}

#[derive(Debug, Serialize)]
struct OcsvmReport {
    requested_nu: f64,
    nu: f64,
    gamma: f64,
    support_vectors: usize,
    margin_support_vectors: usize,
    outliers: usize,
    outlier_fraction: f64,
    support_vector_fraction: f64,
    /// Outlier fraction at most ν and support-vector fraction at least ν.
    nu_property_holds: bool,
    rho_from_bounds: bool,
    degenerate_range: bool,
    iterations: usize,
}

fn day_report(day: u32, det: &TrainedDetectors, requested_nu: f64) -> DayReport {
    let oc = &det.ocsvm;
    let stats = oc.stats();
    let slack = 1e-12;
    DayReport {
        day,
        clips: det.provenance.clips.len(),
        rows: det.provenance.rows,
        dim: det.iforest.feature_meta().dim,
        source_hash: det.provenance.source_hash.clone(),
        iforest: IforestReport {
            n_trees: det.iforest.trees().len(),
            subsample_size: det.iforest.subsample_size(),
            height_limit: det.iforest.height_limit(),
        },
        ocsvm: OcsvmReport {
            requested_nu,
            nu: oc.nu(),
            gamma: oc.kernel().gamma,
            support_vectors: stats.support_vectors,
            margin_support_vectors: stats.margin_support_vectors,
            outliers: stats.outliers,
            outlier_fraction: stats.outlier_fraction(),
            support_vector_fraction: stats.support_vector_fraction(),
            nu_property_holds: stats.outlier_fraction() <= oc.nu() + slack
                && stats.support_vector_fraction() >= oc.nu() - slack,
            rho_from_bounds: oc.rho_from_bounds(),
            degenerate_range: oc.degenerate_range(),
            iterations: stats.iterations,
        },
    }
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.paths.manifest.as_ref().ok_or_else(|| {
        Error::InvalidConfig("no manifest given (--manifest or paths.manifest)".into())
    })?;
    DatasetManifest::load(path)
}

fn external_features(cfg: &RunConfig) -> Result<Option<wingbeat::features::FeatureMatrix>> {
    match (cfg.extractor, &cfg.paths.features) {
        (Extractor::External, Some(path)) => load_embeddings(path).map(Some),
        (Extractor::External, None) => Err(Error::InvalidConfig(
            "external extractor needs a features file".into(),
        )),
        (Extractor::Spectral, _) => Ok(None),
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let detectors = cfg.detectors();
    let daily = match external_features(cfg)? {
        Some(matrix) => {
            DailyDetectors::train_from_features(&manifest, &matrix, &cfg.pipeline, &detectors)?
        }
        None => DailyDetectors::train(&manifest, &cfg.spectral, &cfg.pipeline, &detectors)?,
    };
    let dir = &cfg.paths.models_dir;
    daily.save(dir)?;
    let report = TrainingReport {
        schema_version: 1,
        days: daily
            .days()
            .map(|(d, det)| day_report(d, det, cfg.ocsvm.nu))
            .collect(),
    };
    write_file(
        &dir.join(TRAINING_REPORT_FILE),
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    for d in &report.days {
        println!(
            "day {}: {} clips, {} rows, ocsvm nu {} ({} SVs, {} outliers, nu-property {})",
            d.day,
            d.clips,
            d.rows,
            d.ocsvm.nu,
            d.ocsvm.support_vectors,
            d.ocsvm.outliers,
            if d.ocsvm.nu_property_holds {
                "ok"
            } else {
                "VIOLATED"
            }
        );
    }
    println!("models written to {}", dir.display());
    Ok(())
}

fn load_models(cfg: &RunConfig) -> Result<DailyDetectors> {
    let mut daily = DailyDetectors::load(&cfg.paths.models_dir)?;
    for (day, det) in daily.days() {
        let mut model = det.pipeline.clone();
        model.threshold = cfg.pipeline.threshold;
        if model != cfg.pipeline {
            log::warn!("day {day} models were trained with a different pipeline; using the models' window geometry");
        }
    }
    daily.set_threshold(cfg.pipeline.threshold);
    Ok(daily)
}

fn pick_day(daily: &DailyDetectors, day: Option<u32>) -> Result<(u32, &TrainedDetectors)> {
    match day {
        Some(d) => daily
            .day(d)
            .map(|t| (d, t))
            .ok_or_else(|| Error::InvalidConfig(format!("no models for day {d}"))),
        None => daily.single(),
    }
}

/// What `score` and `plot` work on: a WAV file, or one clip of the
/// configured embedding file.
pub enum ScoreInput {
    Wav(PathBuf),
    Clip(String),
}

struct Scored {
    clip_id: String,
    decisions: Vec<ClipDecision>,
    audio: Option<(MonoClip, SpectralExtractor)>,
}

fn score_input(
    cfg: &RunConfig,
    input: &ScoreInput,
    day: Option<u32>,
    which: &[Detector],
) -> Result<Scored> {
    let daily = load_models(cfg)?;
    let (day, det) = pick_day(&daily, day)?;
    log::info!("scoring with day {day} models");
    match input {
        ScoreInput::Wav(path) => {
            let clip_id = path
                .file_stem()
                .map_or_else(|| "clip".to_string(), |s| s.to_string_lossy().into_owned());
            let clip = load_analysis_clip(path, det.pipeline.analysis_rate)?;
            let decisions = score_clip_all(det, &clip, &clip_id, which)?;
            let extractor = det.extractor()?;
            Ok(Scored {
                clip_id,
                decisions,
                audio: Some((clip, extractor)),
            })
        }
        ScoreInput::Clip(id) => {
            let matrix = external_features(cfg)?.ok_or_else(|| {
                Error::InvalidConfig(
                    "--clip needs the external extractor and a features file".into(),
                )
            })?;
            let rows: Vec<_> = matrix
                .rows()
                .iter()
                .filter(|r| &r.clip_id == id)
                .cloned()
                .collect();
            if rows.is_empty() {
                return Err(Error::InvalidInput(format!("no embeddings for clip {id}")));
            }
            let sub = wingbeat::features::FeatureMatrix::from_rows(matrix.meta.clone(), rows)?;
            Ok(Scored {
                clip_id: id.clone(),
                decisions: score_feature_matrix(det, &sub, which)?,
                audio: None,
            })
        }
    }
}

pub fn score(
    cfg: &RunConfig,
    input: &ScoreInput,
    day: Option<u32>,
    which: &[Detector],
    out: Option<&Path>,
) -> Result<()> {
    let scored = score_input(cfg, input, day, which)?;
    for d in &scored.decisions {
        println!(
            "{} {} mean {:.4} {}",
            d.clip_id, d.detector, d.mean_score, d.verdict
        );
    }
    if let Some(dir) = out {
        let path = dir.join(format!("{}_trace.csv", scored.clip_id));
        write_file(&path, &decisions_long_csv(&scored.decisions))?;
        println!("trace written to {}", path.display());
    }
    Ok(())
}

pub fn plot(
    cfg: &RunConfig,
    wav: &Path,
    day: Option<u32>,
    which: &[Detector],
    out: &Path,
) -> Result<()> {
    let scored = score_input(cfg, &ScoreInput::Wav(wav.to_path_buf()), day, which)?;
    let (clip, extractor) = scored.audio.expect("wav input carries audio");
    let limited = extractor.band_limit(&clip.samples);
    let spectrogram = extractor.log_mel(&limited)?;
    let img = plot::render(&plot::Figure {
        spectrogram: &spectrogram,
        frame_hop_s: extractor.config().hop as f64 / clip.sample_rate as f64,
        duration_s: clip.duration_s(),
        decisions: &scored.decisions,
    });
    plot::save_png(&img, out)?;
    let csv = out.with_extension("csv");
    write_file(&csv, &decisions_long_csv(&scored.decisions))?;
    println!(
        "figure written to {} (trace data in {})",
        out.display(),
        csv.display()
    );
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig, which: &[Detector]) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let daily = load_models(cfg)?;
    let outcome = match external_features(cfg)? {
        Some(matrix) => score_features_daily(&daily, &manifest, &matrix, which),
        None => score_manifest_daily(&daily, &manifest, which),
    };
    for f in &outcome.failures {
        log::warn!("excluded {}: {}", f.clip_id, f.message);
    }
    let table = evaluate(&outcome.decisions, &manifest)?;
    let out = &cfg.paths.out;
    let text = render_text(&table);
    write_file(&out.join(ACCURACY_TEXT_FILE), &text)?;
    write_file(&out.join(ACCURACY_CSV_FILE), &render_csv(&table))?;
    write_file(
        &out.join(DECISIONS_LONG_FILE),
        &decisions_long_csv(&outcome.decisions),
    )?;
    write_file(
        &out.join(DECISIONS_SUMMARY_FILE),
        &decisions_summary_csv(&outcome.decisions),
    )?;
    let excluded = outcome.failures.len();
    DecisionReport::new(outcome).save(out.join(DECISIONS_FILE))?;
    print!("{text}");
    if excluded > 0 {
        println!(
            "{excluded} clips excluded; see {}",
            out.join(DECISIONS_FILE).display()
        );
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
        _ => Error::Io {
            path: p.to_path_buf(),
            source: e,
        },
    };
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io(path, e))
}

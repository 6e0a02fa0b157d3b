//! Clip-level pipeline: audio to windows to embeddings to per-window anomaly
//! scores, averaged into a verdict. Also trains both detectors from a
//! manifest and persists them together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_io::{load_analysis_clip, segment, MonoClip, SegmentationConfig};
use crate::error::{Error, ErrorClass, Result};
use crate::eval::{ContainerClass, DatasetManifest, ManifestEntry, Role};
use crate::features::{FeatureMatrix, FeatureVector, SpectralEmbedConfig, SpectralExtractor};
use crate::iforest::{IForestParams, IsolationForest};
use crate::ocsvm::{OcsvmModel, OcsvmParams};

pub const DETECTORS_FORMAT: &str = "wingbeat-detectors";
pub const DETECTORS_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const IFOREST_FILE: &str = "iforest.json";
const OCSVM_FILE: &str = "ocsvm.json";
const DETECTORS_FILE: &str = "detectors.json";
const DAILY_INDEX_FILE: &str = "models.json";
pub const DAILY_FORMAT: &str = "wingbeat-daily-detectors";
pub const DAILY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Iforest,
    Ocsvm,
}

impl Detector {
    pub const ALL: [Detector; 2] = [Detector::Iforest, Detector::Ocsvm];

    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Iforest => "iforest",
            Detector::Ocsvm => "ocsvm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iforest" => Ok(Detector::Iforest),
            "ocsvm" => Ok(Detector::Ocsvm),
            _ => Err(Error::InvalidInput(format!("unknown detector {s:?}"))),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Contaminated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Clean => "clean",
            Verdict::Contaminated => "contaminated",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contaminated iff `mean_score > threshold`; equality is clean.
pub fn verdict_for(mean_score: f64, threshold: f64) -> Verdict {
    if mean_score > threshold {
        Verdict::Contaminated
    } else {
        Verdict::Clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub start_s: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDecision {
    pub clip_id: String,
    pub detector: Detector,
    pub chunk_scores: Vec<ChunkScore>,
    pub mean_score: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl ClipDecision {
    pub fn from_scores(
        clip_id: impl Into<String>,
        detector: Detector,
        chunk_scores: Vec<ChunkScore>,
        threshold: f64,
    ) -> Result<Self> {
        if chunk_scores.is_empty() {
            return Err(Error::InvalidInput(
                "a decision needs at least one chunk score".into(),
            ));
        }
        if !threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "threshold must be finite, got {threshold}"
            )));
        }
        let mean_score =
            chunk_scores.iter().map(|c| c.score).sum::<f64>() / chunk_scores.len() as f64;
        Ok(Self {
            clip_id: clip_id.into(),
            detector,
            chunk_scores,
            mean_score,
            threshold,
            verdict: verdict_for(mean_score, threshold),
        })
    }
}

/// Analysis rate, window geometry and the verdict threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub analysis_rate: u32,
    pub window_s: f64,
    /// Hop between scored windows.
    pub hop_s: f64,
    /// Hop between training windows.
    pub train_hop_s: f64,
    pub train_chunks_per_clip: usize,
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            analysis_rate: 4000,
            window_s: 4.0,
            hop_s: 2.0,
            train_hop_s: 4.0,
            train_chunks_per_clip: 6,
            threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            window_s: self.window_s,
            hop_s: self.hop_s,
            analysis_rate: self.analysis_rate,
        }
    }

    pub fn training_segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            hop_s: self.train_hop_s,
            ..self.segmentation()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation().validate()?;
        self.training_segmentation().validate()?;
        if self.train_chunks_per_clip == 0 {
            return Err(Error::InvalidConfig(
                "train_chunks_per_clip must be positive".into(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub iforest: IForestParams,
    pub ocsvm: OcsvmParams,
}

/// Where the training matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    /// SHA-256 of the manifest's canonical JSON, or of the embedding file.
    pub source_hash: String,
    pub clips: Vec<String>,
    pub rows: usize,
    /// ν actually passed to the solver, after raising it to `1 / rows` if needed.
    pub effective_nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectorsHeader {
    /// `None` when the detectors were fitted on external embeddings.
    feature_config: Option<SpectralEmbedConfig>,
    pipeline: PipelineConfig,
    provenance: TrainingProvenance,
}

/// Both detectors, fitted on the same matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDetectors {
    pub iforest: IsolationForest,
    pub ocsvm: OcsvmModel,
    pub feature_config: Option<SpectralEmbedConfig>,
    pub pipeline: PipelineConfig,
    pub provenance: TrainingProvenance,
}

/// Smallest ν the dual admits for `rows` training points is `1 / rows`.
pub fn effective_nu(nu: f64, rows: usize) -> f64 {
    if rows == 0 {
        return nu;
    }
    nu.max(1.0 / rows as f64)
}

impl TrainedDetectors {
    pub fn fit(
        matrix: &FeatureMatrix,
        detectors: &DetectorConfig,
        feature_config: Option<SpectralEmbedConfig>,
        pipeline: PipelineConfig,
        source_hash: String,
    ) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let nu = effective_nu(detectors.ocsvm.nu, matrix.len());
        if nu != detectors.ocsvm.nu {
            log::warn!(
                "nu = {} is infeasible for {} training rows; using {nu}",
                detectors.ocsvm.nu,
                matrix.len()
            );
        }
        let iforest = IsolationForest::fit(matrix, &detectors.iforest)?;
        let ocsvm = OcsvmModel::fit(
            matrix,
            &OcsvmParams {
                nu,
                ..detectors.ocsvm.clone()
            },
        )?;
        let mut clips: Vec<String> = matrix.rows().iter().map(|r| r.clip_id.clone()).collect();
        clips.sort();
        clips.dedup();
        Ok(Self {
            iforest,
            ocsvm,
            feature_config,
            pipeline,
            provenance: TrainingProvenance {
                source_hash,
                clips,
                rows: matrix.len(),
                effective_nu: nu,
            },
        })
    }

    /// The built-in extractor these detectors expect, or an error for
    /// detectors trained on external embeddings.
    pub fn extractor(&self) -> Result<SpectralExtractor> {
        match &self.feature_config {
            Some(cfg) => SpectralExtractor::new(cfg.clone(), self.pipeline.analysis_rate),
            None => Err(Error::ExtractorMismatch {
                expected: self.iforest.feature_meta().extractor_id.clone(),
                actual: crate::features::SPECTRAL_EXTRACTOR_ID.into(),
            }),
        }
    }

    /// Anomaly score of one embedding under one detector.
    pub fn score_values(&self, values: &[f64], which: Detector) -> Result<f64> {
        match which {
            Detector::Iforest => self.iforest.score(values),
            Detector::Ocsvm => self.ocsvm.anomaly_score(values),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.iforest.save(dir.join(IFOREST_FILE))?;
        self.ocsvm.save(dir.join(OCSVM_FILE))?;
        let header = DetectorsHeader {
            feature_config: self.feature_config.clone(),
            pipeline: self.pipeline.clone(),
            provenance: self.provenance.clone(),
        };
        let path = dir.join(DETECTORS_FILE);
        crate::persist::save_model(&path, DETECTORS_FORMAT, DETECTORS_VERSION, &header)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: DetectorsHeader = crate::persist::load_model(
            &dir.join(DETECTORS_FILE),
            DETECTORS_FORMAT,
            DETECTORS_VERSION,
        )?;
        let iforest = IsolationForest::load(dir.join(IFOREST_FILE))?;
        let ocsvm = OcsvmModel::load(dir.join(OCSVM_FILE))?;
        iforest
            .feature_meta()
            .ensure_compatible(ocsvm.feature_meta())?;
        Ok(Self {
            iforest,
            ocsvm,
            feature_config: header.feature_config,
            pipeline: header.pipeline,
            provenance: header.provenance,
        })
    }
}

/// Scores every window of an analysis-rate clip with one detector.
pub fn score_clip(
    detectors: &TrainedDetectors,
    clip: &MonoClip,
    clip_id: &str,
    which: Detector,
) -> Result<ClipDecision> {
    let extractor = detectors.extractor()?;
    let rows = embed_clip(
        &extractor,
        clip,
        clip_id,
        &detectors.pipeline.segmentation(),
    )?;
    let hop = detectors.pipeline.hop_s;
    score_rows(detectors, &rows, clip_id, which, |r| {
        r.chunk_index as f64 * hop
    })
}

/// Scores a clip with every requested detector, embedding it once.
pub fn score_clip_all(
    detectors: &TrainedDetectors,
    clip: &MonoClip,
    clip_id: &str,
    which: &[Detector],
) -> Result<Vec<ClipDecision>> {
    let extractor = detectors.extractor()?;
    let rows = embed_clip(
        &extractor,
        clip,
        clip_id,
        &detectors.pipeline.segmentation(),
    )?;
    let hop = detectors.pipeline.hop_s;
    which
        .iter()
        .map(|&d| score_rows(detectors, &rows, clip_id, d, |r| r.chunk_index as f64 * hop))
        .collect()
}

/// Scores precomputed embeddings of one clip; window `k` starts at `k * hop_s`.
pub fn score_feature_rows(
    detectors: &TrainedDetectors,
    rows: &[FeatureVector],
    clip_id: &str,
    which: Detector,
) -> Result<ClipDecision> {
    let hop = detectors.pipeline.hop_s;
    let mut sorted: Vec<&FeatureVector> = rows.iter().collect();
    sorted.sort_by_key(|r| r.chunk_index);
    let owned: Vec<FeatureVector> = sorted.into_iter().cloned().collect();
    score_rows(detectors, &owned, clip_id, which, |r| {
        r.chunk_index as f64 * hop
    })
}

fn score_rows(
    detectors: &TrainedDetectors,
    rows: &[FeatureVector],
    clip_id: &str,
    which: Detector,
    start_s: impl Fn(&FeatureVector) -> f64,
) -> Result<ClipDecision> {
    let chunk_scores = rows
        .iter()
        .map(|r| {
            Ok(ChunkScore {
                start_s: start_s(r),
                score: detectors.score_values(&r.values, which)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ClipDecision::from_scores(clip_id, which, chunk_scores, detectors.pipeline.threshold)
}

/// Embeds every window of `clip` under `seg`.
pub fn embed_clip(
    extractor: &SpectralExtractor,
    clip: &MonoClip,
    clip_id: &str,
    seg: &SegmentationConfig,
) -> Result<Vec<FeatureVector>> {
    segment(clip, seg)?
        .iter()
        .map(|chunk| extractor.embed(chunk, clip_id))
        .collect()
}

/// Training rows for one clip: the first `per_clip` non-overlapping windows.
pub fn training_rows(
    extractor: &SpectralExtractor,
    clip: &MonoClip,
    clip_id: &str,
    pipeline: &PipelineConfig,
) -> Result<Vec<FeatureVector>> {
    let chunks = segment(clip, &pipeline.training_segmentation())?;
    if chunks.len() < pipeline.train_chunks_per_clip {
        log::warn!(
            "training clip {clip_id} yields {} windows, fewer than {}",
            chunks.len(),
            pipeline.train_chunks_per_clip
        );
    }
    chunks
        .iter()
        .take(pipeline.train_chunks_per_clip)
        .map(|c| extractor.embed(c, clip_id))
        .collect()
}

/// Training entries of a manifest, rejecting anything that is not male.
pub fn training_entries(manifest: &DatasetManifest) -> Result<Vec<&ManifestEntry>> {
    let train: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Train)
        .collect();
    if let Some(bad) = train
        .iter()
        .find(|e| e.container_class != ContainerClass::Male)
    {
        return Err(Error::Manifest(format!(
            "training clip {} is labelled {}; detectors must be trained on male-only containers",
            bad.clip_id,
            bad.container_class.as_str()
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(train)
}

/// Builds the training matrix from the manifest's `train` entries.
pub fn training_matrix(
    manifest: &DatasetManifest,
    features: &SpectralEmbedConfig,
    pipeline: &PipelineConfig,
) -> Result<FeatureMatrix> {
    pipeline.validate()?;
    let extractor = SpectralExtractor::new(features.clone(), pipeline.analysis_rate)?;
    let entries = training_entries(manifest)?;
    let per_clip = entries
        .par_iter()
        .map(|e| {
            let clip = load_analysis_clip(manifest.resolve(e), pipeline.analysis_rate)?;
            training_rows(&extractor, &clip, &e.clip_id, pipeline)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matrix =
        FeatureMatrix::from_rows(extractor.meta(), per_clip.into_iter().flatten().collect())?;
    matrix.sort_rows();
    Ok(matrix)
}

pub fn train_from_manifest(
    manifest: &DatasetManifest,
    features: &SpectralEmbedConfig,
    pipeline: &PipelineConfig,
    detectors: &DetectorConfig,
) -> Result<TrainedDetectors> {
    let matrix = training_matrix(manifest, features, pipeline)?;
    TrainedDetectors::fit(
        &matrix,
        detectors,
        Some(features.clone()),
        pipeline.clone(),
        manifest.content_hash(),
    )
}

/// Fits both detectors on externally computed embeddings.
pub fn train_from_features(
    matrix: &FeatureMatrix,
    pipeline: &PipelineConfig,
    detectors: &DetectorConfig,
) -> Result<TrainedDetectors> {
    let mut hasher = Sha256::new();
    for r in matrix.canonical_rows() {
        hasher.update(r.clip_id.as_bytes());
        hasher.update(r.chunk_index.to_le_bytes());
        for v in &r.values {
            hasher.update(v.to_le_bytes());
        }
    }
    TrainedDetectors::fit(
        matrix,
        detectors,
        None,
        pipeline.clone(),
        hex::encode(hasher.finalize()),
    )
}

/// One detector pair per recording day. Insects change behaviour from day
/// to day, so each day's test clips are scored by models fitted on that
/// day's male training container only.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyDetectors {
    days: BTreeMap<u32, TrainedDetectors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DailyIndex {
    days: Vec<u32>,
}

impl DailyDetectors {
    pub fn new(days: BTreeMap<u32, TrainedDetectors>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Self { days })
    }

    /// Trains every day that has `train` entries. Test clips on a day with
    /// no training clips are reported as failures when scored.
    pub fn train(
        manifest: &DatasetManifest,
        features: &SpectralEmbedConfig,
        pipeline: &PipelineConfig,
        detectors: &DetectorConfig,
    ) -> Result<Self> {
        training_entries(manifest)?;
        let mut days = BTreeMap::new();
        for day in manifest.days() {
            let sub = manifest.for_day(day);
            if !sub.entries.iter().any(|e| e.role == Role::Train) {
                log::warn!("day {day} has no training clips");
                continue;
            }
            log::info!("training day {day}");
            days.insert(
                day,
                train_from_manifest(&sub, features, pipeline, detectors)?,
            );
        }
        Self::new(days)
    }

    /// Per-day training on external embeddings: each day's detectors see
    /// every row whose clip is a `train` entry of that day, as given.
    pub fn train_from_features(
        manifest: &DatasetManifest,
        matrix: &FeatureMatrix,
        pipeline: &PipelineConfig,
        detectors: &DetectorConfig,
    ) -> Result<Self> {
        let entries = training_entries(manifest)?;
        let mut days = BTreeMap::new();
        for day in manifest.days() {
            let ids: std::collections::BTreeSet<&str> = entries
                .iter()
                .filter(|e| e.day_since_sexing == day)
                .map(|e| e.clip_id.as_str())
                .collect();
            if ids.is_empty() {
                log::warn!("day {day} has no training clips");
                continue;
            }
            let rows: Vec<FeatureVector> = matrix
                .rows()
                .iter()
                .filter(|r| ids.contains(r.clip_id.as_str()))
                .cloned()
                .collect();
            let found: std::collections::BTreeSet<&str> =
                rows.iter().map(|r| r.clip_id.as_str()).collect();
            if let Some(missing) = ids.iter().find(|id| !found.contains(*id)) {
                return Err(Error::Manifest(format!(
                    "no embeddings for training clip {missing}"
                )));
            }
            let sub = FeatureMatrix::from_rows(matrix.meta.clone(), rows)?;
            days.insert(day, train_from_features(&sub, pipeline, detectors)?);
        }
        Self::new(days)
    }

    pub fn days(&self) -> impl Iterator<Item = (u32, &TrainedDetectors)> {
        self.days.iter().map(|(d, t)| (*d, t))
    }

    pub fn day(&self, day: u32) -> Option<&TrainedDetectors> {
        self.days.get(&day)
    }

    /// Replaces the verdict threshold of every day's detectors.
    pub fn set_threshold(&mut self, threshold: f64) {
        for det in self.days.values_mut() {
            det.pipeline.threshold = threshold;
        }
    }

    /// The only day's detectors, or an error naming the available days.
    pub fn single(&self) -> Result<(u32, &TrainedDetectors)> {
        if self.days.len() == 1 {
            let (d, t) = self.days.iter().next().expect("one day");
            return Ok((*d, t));
        }
        Err(Error::InvalidConfig(format!(
            "models exist for days {:?}; choose one",
            self.days.keys().collect::<Vec<_>>()
        )))
    }

    pub fn day_dir(dir: &Path, day: u32) -> std::path::PathBuf {
        dir.join(format!("day{day}"))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (day, det) in &self.days {
            det.save(Self::day_dir(dir, *day))?;
        }
        let index = DailyIndex {
            days: self.days.keys().copied().collect(),
        };
        crate::persist::save_model(
            &dir.join(DAILY_INDEX_FILE),
            DAILY_FORMAT,
            DAILY_VERSION,
            &index,
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: DailyIndex =
            crate::persist::load_model(&dir.join(DAILY_INDEX_FILE), DAILY_FORMAT, DAILY_VERSION)?;
        let days = index
            .days
            .into_iter()
            .map(|d| Ok((d, TrainedDetectors::load(Self::day_dir(dir, d))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(days)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFailure {
    pub clip_id: String,
    pub class: ErrorClass,
    pub message: String,
}

/// Decisions for every clip that scored, plus the clips that did not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub decisions: Vec<ClipDecision>,
    pub failures: Vec<ClipFailure>,
}

impl BatchOutcome {
    /// Fails with an aggregated error if any clip failed.
    pub fn into_result(self) -> Result<Vec<ClipDecision>> {
        if self.failures.is_empty() {
            return Ok(self.decisions);
        }
        let scored: std::collections::BTreeSet<&str> =
            self.decisions.iter().map(|d| d.clip_id.as_str()).collect();
        let total = self.failures.len() + scored.len();
        Err(Error::Batch {
            failed: self.failures.len(),
            total,
            details: self
                .failures
                .iter()
                .map(|f| format!("{}: {}", f.clip_id, f.message))
                .collect::<Vec<_>>()
                .join("; "),
        })
    }
}

/// Scores every `test` entry. Output follows manifest order, then `which`
/// order; a failing clip is recorded and the batch continues.
pub fn score_manifest(
    detectors: &TrainedDetectors,
    manifest: &DatasetManifest,
    which: &[Detector],
) -> BatchOutcome {
    let tests: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Test)
        .collect();
    let results: Vec<(String, Result<Vec<ClipDecision>>)> = tests
        .par_iter()
        .map(|e| {
            let r = load_analysis_clip(manifest.resolve(e), detectors.pipeline.analysis_rate)
                .and_then(|clip| score_clip_all(detectors, &clip, &e.clip_id, which));
            (e.clip_id.clone(), r)
        })
        .collect();
    collect_outcome(results)
}

fn collect_outcome(results: Vec<(String, Result<Vec<ClipDecision>>)>) -> BatchOutcome {
    let mut out = BatchOutcome::default();
    for (clip_id, r) in results {
        match r {
            Ok(ds) => out.decisions.extend(ds),
            Err(e) => {
                log::error!("{clip_id}: {e}");
                out.failures.push(ClipFailure {
                    clip_id,
                    class: e.class(),
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// Scores every `test` entry with the detectors of its own day.
pub fn score_manifest_daily(
    daily: &DailyDetectors,
    manifest: &DatasetManifest,
    which: &[Detector],
) -> BatchOutcome {
    let tests: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Test)
        .collect();
    let results: Vec<(String, Result<Vec<ClipDecision>>)> = tests
        .par_iter()
        .map(|e| {
            let r = daily
                .day(e.day_since_sexing)
                .ok_or_else(|| {
                    Error::Manifest(format!("no models trained for day {}", e.day_since_sexing))
                })
                .and_then(|det| {
                    let clip = load_analysis_clip(manifest.resolve(e), det.pipeline.analysis_rate)?;
                    score_clip_all(det, &clip, &e.clip_id, which)
                });
            (e.clip_id.clone(), r)
        })
        .collect();
    collect_outcome(results)
}

/// Scores the embeddings of every `test` entry with its day's detectors.
/// A clip with no rows in `matrix` is recorded as a failure.
pub fn score_features_daily(
    daily: &DailyDetectors,
    manifest: &DatasetManifest,
    matrix: &FeatureMatrix,
    which: &[Detector],
) -> BatchOutcome {
    let mut by_clip: BTreeMap<&str, Vec<FeatureVector>> = BTreeMap::new();
    for r in matrix.rows() {
        by_clip.entry(&r.clip_id).or_default().push(r.clone());
    }
    let results = manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Test)
        .map(|e| {
            let r = daily
                .day(e.day_since_sexing)
                .ok_or_else(|| {
                    Error::Manifest(format!("no models trained for day {}", e.day_since_sexing))
                })
                .and_then(|det| {
                    det.iforest.feature_meta().ensure_compatible(&matrix.meta)?;
                    let rows = by_clip.get(e.clip_id.as_str()).ok_or_else(|| {
                        Error::Manifest(format!("no embeddings for clip {}", e.clip_id))
                    })?;
                    which
                        .iter()
                        .map(|&d| score_feature_rows(det, rows, &e.clip_id, d))
                        .collect()
                });
            (e.clip_id.clone(), r)
        })
        .collect();
    collect_outcome(results)
}

/// Scores external embeddings grouped by `clip_id`, in `clip_id` order.
pub fn score_feature_matrix(
    detectors: &TrainedDetectors,
    matrix: &FeatureMatrix,
    which: &[Detector],
) -> Result<Vec<ClipDecision>> {
    detectors
        .iforest
        .feature_meta()
        .ensure_compatible(&matrix.meta)?;
    let mut by_clip: BTreeMap<&str, Vec<FeatureVector>> = Default::default();
    for r in matrix.rows() {
        by_clip.entry(&r.clip_id).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (clip_id, rows) in by_clip {
        for &d in which {
            out.push(score_feature_rows(detectors, &rows, clip_id, d)?);
        }
    }
    Ok(out)
}

/// Long form: one line per window.
pub fn decisions_long_csv(decisions: &[ClipDecision]) -> String {
    let mut s = String::from("clip_id,detector,chunk_start_s,chunk_score\n");
    for d in decisions {
        for c in &d.chunk_scores {
            s.push_str(&format!(
                "{},{},{:?},{:?}\n",
                csv_field(&d.clip_id),
                d.detector,
                c.start_s,
                c.score
            ));
        }
    }
    s
}

/// Summary: one line per clip and detector.
pub fn decisions_summary_csv(decisions: &[ClipDecision]) -> String {
    let mut s = String::from("clip_id,detector,mean,verdict\n");
    for d in decisions {
        s.push_str(&format!(
            "{},{},{:?},{}\n",
            csv_field(&d.clip_id),
            d.detector,
            d.mean_score,
            d.verdict
        ));
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Structured decision report, consumed by evaluation and plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionReport {
    pub schema_version: u32,
    pub decisions: Vec<ClipDecision>,
    #[serde(default)]
    pub failures: Vec<ClipFailure>,
}

impl DecisionReport {
    pub fn new(outcome: BatchOutcome) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            decisions: outcome.decisions,
            failures: outcome.failures,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| Error::ModelFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::ModelFile {
                path: path.to_path_buf(),
                reason: format!("unsupported report schema {}", report.schema_version),
            });
        }
        Ok(report)
    }
}

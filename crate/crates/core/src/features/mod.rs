//! Chunk embeddings: the built-in spectral extractor and ingestion of
//! externally computed embedding files.

mod file;
mod spectral;

use serde::{Deserialize, Serialize};

pub use file::{load_embeddings, save_embeddings, sidecar_path, FEATURE_FILE_SCHEMA_VERSION};
pub use spectral::{
    band_limit, extract_spectral_embedding, hz_to_mel, log_mel_spectrogram, mel_edges, mel_to_hz,
    SpectralEmbedConfig, SpectralExtractor, Spectrogram, SPECTRAL_EXTRACTOR_ID, STATS_PER_BAND,
};

use crate::error::{Error, Result};

/// Extractor id used for embedding files that arrive without a sidecar.
pub const EXTERNAL_EXTRACTOR_ID: &str = "external";

/// Embedding of one window of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub chunk_index: usize,
    pub clip_id: String,
}

/// Which extractor produced a matrix, so detectors can refuse foreign features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMeta {
    pub extractor_id: String,
    pub config_hash: String,
    pub dim: usize,
    pub rate_reinterpretation: String,
}

impl FeatureMeta {
    pub fn external(dim: usize) -> Self {
        Self {
            extractor_id: EXTERNAL_EXTRACTOR_ID.into(),
            config_hash: String::new(),
            dim,
            rate_reinterpretation: String::new(),
        }
    }

    /// Fails unless `other` comes from the same extractor, configuration and dimension.
    pub fn ensure_compatible(&self, other: &FeatureMeta) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if self.extractor_id != other.extractor_id || self.config_hash != other.config_hash {
            return Err(Error::ExtractorMismatch {
                expected: format!("{}#{}", self.extractor_id, self.config_hash),
                actual: format!("{}#{}", other.extractor_id, other.config_hash),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub meta: FeatureMeta,
    rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn new(meta: FeatureMeta) -> Self {
        Self {
            meta,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(meta: FeatureMeta, rows: Vec<FeatureVector>) -> Result<Self> {
        let mut m = Self::new(meta);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    /// Matrix of anonymous rows tagged `("row", i)`, for in-memory use.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map_or(0, Vec::len);
        let rows = values
            .into_iter()
            .enumerate()
            .map(|(i, values)| FeatureVector {
                values,
                chunk_index: i,
                clip_id: "row".into(),
            })
            .collect();
        Self::from_rows(FeatureMeta::external(dim), rows)
    }

    pub fn push(&mut self, row: FeatureVector) -> Result<()> {
        if row.values.len() != self.meta.dim {
            return Err(Error::DimensionMismatch {
                expected: self.meta.dim,
                actual: row.values.len(),
            });
        }
        if row.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature in {}#{}",
                row.clip_id, row.chunk_index
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: FeatureMatrix) -> Result<()> {
        self.meta.ensure_compatible(&other.meta)?;
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FeatureVector> {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows ordered by identity `(clip_id, chunk_index)` and then by value.
    /// Seeded detectors consume rows in this order so that fitting does not
    /// depend on how the matrix was assembled.
    pub fn canonical_rows(&self) -> Vec<&FeatureVector> {
        let mut rows: Vec<&FeatureVector> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            (&a.clip_id, a.chunk_index)
                .cmp(&(&b.clip_id, b.chunk_index))
                .then_with(|| {
                    a.values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        rows
    }

    /// Orders rows by `(clip_id, chunk_index)`.
    pub fn sort_rows(&mut self) {
        self.rows
            .sort_by(|a, b| (&a.clip_id, a.chunk_index).cmp(&(&b.clip_id, b.chunk_index)));
    }
}

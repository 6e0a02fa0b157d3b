//! Built-in spectral embedding: band-limited log-mel statistics.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureMeta, FeatureVector};
use crate::audio_io::Chunk;
use crate::error::{Error, Result};

pub const SPECTRAL_EXTRACTOR_ID: &str = "spectral-logmel-stats-v1";

/// Statistics computed per mel band, in output order.
pub const STATS_PER_BAND: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralEmbedConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub output_dim: usize,
    /// Nominal rate tag. Relabelling the time axis leaves sample values
    /// untouched, so this is carried as metadata only.
    pub rate_reinterpretation: String,
}

impl Default for SpectralEmbedConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 160,
            n_mels: 64,
            band_low_hz: 200.0,
            band_high_hz: 2000.0,
            output_dim: 512,
            rate_reinterpretation: "4s@4kHz treated as 1s@16kHz".into(),
        }
    }
}

impl SpectralEmbedConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig(
                "n_fft >= 2 and hop, n_mels, output_dim > 0 required".into(),
            ));
        }
        if !(self.band_low_hz >= 0.0 && self.band_low_hz < self.band_high_hz) {
            return Err(Error::InvalidConfig(format!(
                "band {}-{} Hz is empty",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if self.band_high_hz > nyquist {
            return Err(Error::InvalidConfig(format!(
                "band upper edge {} Hz exceeds Nyquist {nyquist} Hz",
                self.band_high_hz
            )));
        }
        Ok(())
    }

    /// Short stable digest of the configuration.
    pub fn config_hash(&self, sample_rate: u32) -> String {
        let json = serde_json::to_string(&(self, sample_rate)).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Time-frequency matrix, `frames x n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub n_mels: usize,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter edges: `n_mels + 2` frequencies evenly spaced in mel.
pub fn mel_edges(n_mels: usize, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Precomputed filter bank and FFT plans for one (config, rate) pair.
pub struct SpectralExtractor {
    cfg: SpectralEmbedConfig,
    sample_rate: u32,
    window: Vec<f64>,
    /// Sparse filters: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    frame_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralExtractor")
            .field("cfg", &self.cfg)
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl SpectralExtractor {
    pub fn new(cfg: SpectralEmbedConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let n = cfg.n_fft;
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let edges = mel_edges(cfg.n_mels, cfg.band_low_hz, cfg.band_high_hz);
        let bin_hz = sample_rate as f64 / n as f64;
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..=n / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = ((f - l) / (c - l)).min((r - f) / (r - c));
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        let frame_fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            cfg,
            sample_rate,
            window,
            filters,
            frame_fft,
        })
    }

    pub fn config(&self) -> &SpectralEmbedConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn meta(&self) -> FeatureMeta {
        FeatureMeta {
            extractor_id: SPECTRAL_EXTRACTOR_ID.into(),
            config_hash: self.cfg.config_hash(self.sample_rate),
            dim: self.cfg.output_dim,
            rate_reinterpretation: self.cfg.rate_reinterpretation.clone(),
        }
    }

    /// Number of STFT frames for `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.cfg.n_fft {
            0
        } else {
            (len - self.cfg.n_fft) / self.cfg.hop + 1
        }
    }

    /// `log(1 + mel energy)` per frame and band, without band-limiting.
    pub fn log_mel(&self, samples: &[f64]) -> Result<Spectrogram> {
        let n = self.cfg.n_fft;
        if samples.len() < n {
            return Err(Error::InvalidInput(format!(
                "n_fft {n} exceeds chunk length {}",
                samples.len()
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut power = vec![0.0; n / 2 + 1];
        let frames = (0..self.frame_count(samples.len()))
            .map(|t| {
                let start = t * self.cfg.hop;
                for ((b, &x), &w) in buf
                    .iter_mut()
                    .zip(&samples[start..start + n])
                    .zip(&self.window)
                {
                    *b = Complex::new(x * w, 0.0);
                }
                self.frame_fft.process(&mut buf);
                for (p, b) in power.iter_mut().zip(&buf) {
                    *p = b.norm_sqr();
                }
                self.filters
                    .iter()
                    .map(|(first, weights)| {
                        let energy: f64 = weights
                            .iter()
                            .zip(&power[*first..])
                            .map(|(w, p)| w * p)
                            .sum();
                        energy.ln_1p()
                    })
                    .collect()
            })
            .collect();
        Ok(Spectrogram {
            frames,
            n_mels: self.cfg.n_mels,
        })
    }

    /// Removes every spectral component outside the configured band with a
    /// whole-chunk DFT mask.
    pub fn band_limit(&self, samples: &[f64]) -> Vec<f64> {
        band_limit(
            samples,
            self.sample_rate,
            self.cfg.band_low_hz,
            self.cfg.band_high_hz,
        )
    }

    pub fn embed_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let limited = self.band_limit(samples);
        let spec = self.log_mel(&limited)?;
        Ok(summarize(&spec, self.cfg.output_dim))
    }

    pub fn embed(&self, chunk: &Chunk<'_>, clip_id: &str) -> Result<FeatureVector> {
        Ok(FeatureVector {
            values: self.embed_samples(chunk.samples)?,
            chunk_index: chunk.index,
            clip_id: clip_id.to_string(),
        })
    }
}

/// Zeroes DFT bins whose frequency lies outside `[low_hz, high_hz]`.
pub fn band_limit(samples: &[f64], sample_rate: u32, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = sample_rate as f64 / n as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * bin_hz;
        if f < low_hz || f > high_hz {
            *b = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Per-band mean, standard deviation, max and mean absolute frame-to-frame
/// change, laid out band-major per statistic, then padded or truncated to `dim`.
fn summarize(spec: &Spectrogram, dim: usize) -> Vec<f64> {
    let n_mels = spec.n_mels;
    let n_frames = spec.frames.len() as f64;
    let mut out = vec![0.0; STATS_PER_BAND * n_mels];
    for b in 0..n_mels {
        let band = || spec.frames.iter().map(move |f| f[b]);
        let mean = band().sum::<f64>() / n_frames;
        let var = band().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_frames;
        let max = band().fold(f64::NEG_INFINITY, f64::max);
        let flux = if spec.frames.len() > 1 {
            spec.frames
                .windows(2)
                .map(|w| (w[1][b] - w[0][b]).abs())
                .sum::<f64>()
                / (n_frames - 1.0)
        } else {
            0.0
        };
        out[b] = mean;
        out[n_mels + b] = var.sqrt();
        out[2 * n_mels + b] = max;
        out[3 * n_mels + b] = flux;
    }
    out.resize(dim, 0.0);
    out
}

/// `log(1 + mel energy)` spectrogram of a chunk.
pub fn log_mel_spectrogram(
    chunk: &Chunk<'_>,
    cfg: &SpectralEmbedConfig,
    sample_rate: u32,
) -> Result<Spectrogram> {
    SpectralExtractor::new(cfg.clone(), sample_rate)?.log_mel(chunk.samples)
}

pub fn extract_spectral_embedding(
    chunk: &Chunk<'_>,
    cfg: &SpectralEmbedConfig,
    sample_rate: u32,
    clip_id: &str,
) -> Result<FeatureVector> {
    SpectralExtractor::new(cfg.clone(), sample_rate)?.embed(chunk, clip_id)
}

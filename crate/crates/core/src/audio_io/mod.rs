//! Recording ingestion: WAV decoding, channel averaging, resampling to the
//! analysis rate and fixed-length windowing.
//!
//! Everything here is a pure function of its inputs. Chunk boundaries are
//! computed in integer sample units so they are identical on every platform.

mod resample;
mod wav;

use serde::{Deserialize, Serialize};

pub use resample::{reduced_ratio, resample, Resampler, PASSBAND_EDGE, STOPBAND_EDGE};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Multi-channel recording with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub source_path: Option<String>,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidInput("clip has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        if channels
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::InvalidInput(
                "samples must be finite and within [-1, 1]".into(),
            ));
        }
        Ok(Self {
            channels,
            sample_rate,
            source_path: None,
        })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl MonoClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("mono clip is empty".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Averages all channels sample by sample.
pub fn to_mono(clip: &AudioClip) -> Result<MonoClip> {
    let n = clip.channels.len() as f64;
    let samples = (0..clip.len())
        .map(|i| clip.channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    MonoClip::new(samples, clip.sample_rate)
}

/// Window length, hop and analysis rate for chunking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub analysis_rate: u32,
}

impl SegmentationConfig {
    /// 4 s windows with 50 % overlap at 4 kHz.
    pub fn test() -> Self {
        Self {
            window_s: 4.0,
            hop_s: 2.0,
            analysis_rate: 4000,
        }
    }

    /// 4 s non-overlapping windows at 4 kHz.
    pub fn training() -> Self {
        Self {
            hop_s: 4.0,
            ..Self::test()
        }
    }

    pub fn window_samples(&self) -> Result<usize> {
        whole_samples(self.window_s, self.analysis_rate, "window_s")
    }

    pub fn hop_samples(&self) -> Result<usize> {
        whole_samples(self.hop_s, self.analysis_rate, "hop_s")
    }

    pub fn validate(&self) -> Result<()> {
        if self.analysis_rate == 0 {
            return Err(Error::InvalidConfig(
                "analysis_rate must be positive".into(),
            ));
        }
        let window = self.window_samples()?;
        let hop = self.hop_samples()?;
        if hop == 0 || hop > window {
            return Err(Error::InvalidConfig(format!(
                "hop_s must satisfy 0 < hop_s <= window_s (got hop {} s, window {} s)",
                self.hop_s, self.window_s
            )));
        }
        Ok(())
    }

    /// Number of whole windows that fit in `len` samples.
    pub fn chunk_count(&self, len: usize) -> Result<usize> {
        self.validate()?;
        let window = self.window_samples()?;
        let hop = self.hop_samples()?;
        if len < window {
            return Ok(0);
        }
        Ok((len - window) / hop + 1)
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self::test()
    }
}

fn whole_samples(seconds: f64, rate: u32, name: &str) -> Result<usize> {
    let exact = seconds * rate as f64;
    let rounded = exact.round();
    if !exact.is_finite() || rounded <= 0.0 || (exact - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{name} = {seconds} s is not a positive whole number of samples at {rate} Hz"
        )));
    }
    Ok(rounded as usize)
}

/// A window of a mono clip. `start_s` is the window's start time in the clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chunk<'a> {
    pub index: usize,
    pub start_sample: usize,
    pub start_s: f64,
    pub samples: &'a [f64],
}

/// Splits a clip into windows `[k*hop, k*hop + window)`; a trailing partial
/// window is discarded.
pub fn segment<'a>(clip: &'a MonoClip, cfg: &SegmentationConfig) -> Result<Vec<Chunk<'a>>> {
    cfg.validate()?;
    if clip.sample_rate != cfg.analysis_rate {
        return Err(Error::InvalidInput(format!(
            "clip rate {} Hz differs from analysis rate {} Hz",
            clip.sample_rate, cfg.analysis_rate
        )));
    }
    let window = cfg.window_samples()?;
    let hop = cfg.hop_samples()?;
    if clip.samples.len() < window {
        return Err(Error::ClipTooShort {
            samples: clip.samples.len(),
            needed: window,
        });
    }
    let count = (clip.samples.len() - window) / hop + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            Chunk {
                index: k,
                start_sample: start,
                start_s: start as f64 / cfg.analysis_rate as f64,
                samples: &clip.samples[start..start + window],
            }
        })
        .collect())
}

/// Reads a WAV file and brings it to the analysis rate as a mono clip.
pub fn load_analysis_clip(
    path: impl AsRef<std::path::Path>,
    analysis_rate: u32,
) -> Result<MonoClip> {
    let clip = read_wav(path)?;
    prepare(&clip, analysis_rate)
}

/// Channel average followed by resampling to `analysis_rate`.
pub fn prepare(clip: &AudioClip, analysis_rate: u32) -> Result<MonoClip> {
    resample(&to_mono(clip)?, analysis_rate)
}

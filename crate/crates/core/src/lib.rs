//! Acoustic screening of mosquito release containers for female contamination.
//!
//! Recordings are averaged to mono, resampled to 4 kHz and cut into 4 s
//! windows. Each window becomes a fixed-dimension embedding, which an
//! Isolation Forest and a One-Class SVM (both trained on male-only
//! containers) turn into an anomaly score in [0, 1]. A clip is flagged as
//! contaminated when its mean window score exceeds the threshold.

pub mod audio_io;
pub mod error;
pub mod eval;
pub mod features;
pub mod iforest;
pub mod ocsvm;
mod persist;
pub mod scoring;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

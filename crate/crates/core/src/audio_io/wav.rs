//! RIFF/WAVE PCM reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

const MAX_CHANNELS: u16 = 8;

/// Reads an integer or float PCM WAV file, normalizing samples to [-1, 1].
///
/// Integer samples are divided by the type's maximum magnitude (`2^(bits-1)`).
/// Float samples outside [-1, 1] are clamped; non-finite float samples are
/// rejected as malformed.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = WavReader::new(std::io::Cursor::new(bytes)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > MAX_CHANNELS {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("{} channels (supported: 1-{MAX_CHANNELS})", spec.channels),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => {
            // hound leaves the cursor at the start of the data chunk
            let declared = reader.len() as usize;
            let cursor = reader.into_inner();
            let start = cursor.position() as usize;
            let data = &cursor.get_ref()[start..];
            if data.len() < 2 * declared {
                return Err(Error::MalformedWav {
                    path: path.to_path_buf(),
                    reason: "truncated data".into(),
                });
            }
            data[..2 * declared]
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                .collect()
        }
        (SampleFormat::Int, bits @ (8 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_data_error(path, e))?
        }
        (SampleFormat::Float, 32) => {
            let raw: Vec<f32> = reader
                .into_samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_data_error(path, e))?;
            let mut out = Vec::with_capacity(raw.len());
            for v in raw {
                if !v.is_finite() {
                    return Err(Error::MalformedWav {
                        path: path.to_path_buf(),
                        reason: "non-finite float sample".into(),
                    });
                }
                out.push((v as f64).clamp(-1.0, 1.0));
            }
            out
        }
        (format, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?} samples"),
            })
        }
    };

    let n_channels = spec.channels as usize;
    if !interleaved.len().is_multiple_of(n_channels) {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            reason: "data chunk ends mid-frame".into(),
        });
    }
    let frames = interleaved.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for frame in interleaved.chunks_exact(n_channels) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    let mut clip = AudioClip::new(channels, spec.sample_rate)?;
    clip.source_path = Some(path.display().to_string());
    Ok(clip)
}

/// Writes a clip as 16-bit integer PCM.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: clip.channels.len() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    {
        let mut w = writer.get_i16_writer((clip.len() * clip.channels.len()) as u32);
        for i in 0..clip.len() {
            for ch in &clip.channels {
                w.write_sample(quantize_i16(ch[i]));
            }
        }
        w.flush().map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

pub(crate) fn quantize_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Any I/O failure while decoding samples means the data chunk is shorter
/// than the header claims.
fn map_data_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::MalformedWav {
            path: path.to_path_buf(),
            reason: format!("truncated data chunk ({e})"),
        },
        other => map_hound(path, other),
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    let path_buf = path.to_path_buf();
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedWav {
                path: path_buf,
                reason: "truncated data".into(),
            }
        }
        hound::Error::IoError(e) => Error::io(path_buf, e),
        hound::Error::FormatError(reason) => Error::MalformedWav {
            path: path_buf,
            reason: reason.to_string(),
        },
        hound::Error::UnfinishedSample => Error::MalformedWav {
            path: path_buf,
            reason: "data chunk ends mid-sample".into(),
        },
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => Error::UnsupportedFormat {
            path: path_buf,
            reason: "sample width or format not representable".into(),
        },
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path_buf,
            reason: "codec is not PCM or IEEE float".into(),
        },
    }
}

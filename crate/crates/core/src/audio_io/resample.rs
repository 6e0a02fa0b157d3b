//! Polyphase rational resampler with a Kaiser-windowed sinc anti-aliasing filter.

use std::f64::consts::PI;

use super::MonoClip;
use crate::error::{Error, Result};

/// Passband edge as a fraction of the lower of the two rates.
pub const PASSBAND_EDGE: f64 = 0.40;
/// Stopband edge as a fraction of the lower of the two rates.
pub const STOPBAND_EDGE: f64 = 0.45;
/// Design stopband attenuation of the Kaiser window, dB.
pub const STOPBAND_ATTENUATION_DB: f64 = 75.0;

const MAX_TAPS: usize = 1 << 26;

/// Upsample by `up`, low-pass, downsample by `down`, computed one output
/// sample at a time from the matching filter phase.
#[derive(Debug, Clone)]
pub struct Resampler {
    source_rate: u32,
    target_rate: u32,
    up: usize,
    down: usize,
    /// Phase `p` in reverse order: `phases[p][len - 1 - m] = h[p + m * up]`,
    /// so each output is a forward dot product with a contiguous input slice.
    phases: Vec<Vec<f64>>,
    delay: usize,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if source_rate == 0 || target_rate == 0 {
            return Err(Error::InvalidConfig(format!(
                "resample rates must be positive (got {source_rate} -> {target_rate})"
            )));
        }
        let (up, down) = reduced_ratio(source_rate, target_rate);
        let up_rate = source_rate as f64 * up as f64;
        let min_rate = source_rate.min(target_rate) as f64;
        let transition = (STOPBAND_EDGE - PASSBAND_EDGE) * min_rate;
        let cutoff = 0.5 * (PASSBAND_EDGE + STOPBAND_EDGE) * min_rate;

        let delta_omega = 2.0 * PI * transition / up_rate;
        let mut n_taps =
            ((STOPBAND_ATTENUATION_DB - 7.95) / (2.285 * delta_omega)).ceil() as usize + 1;
        if n_taps.is_multiple_of(2) {
            n_taps += 1;
        }
        if n_taps > MAX_TAPS {
            return Err(Error::InvalidConfig(format!(
                "resampling ratio {up}/{down} needs {n_taps} filter taps"
            )));
        }
        let taps = kaiser_lowpass(
            n_taps,
            cutoff / up_rate,
            kaiser_beta(STOPBAND_ATTENUATION_DB),
            up as f64,
        );

        let per_phase = n_taps.div_ceil(up);
        let mut phases = vec![Vec::with_capacity(per_phase); up];
        for (i, &h) in taps.iter().enumerate() {
            phases[i % up].push(h);
        }
        for p in &mut phases {
            p.reverse();
        }
        Ok(Self {
            source_rate,
            target_rate,
            up,
            down,
            phases,
            delay: (n_taps - 1) / 2,
        })
    }

    /// Reduced `(up, down)` ratio.
    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn n_taps(&self) -> usize {
        self.phases.iter().map(Vec::len).sum()
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.up as u128).div_ceil(self.down as u128)) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.up == 1 && self.down == 1 {
            return input.to_vec();
        }
        if input.is_empty() {
            return Vec::new();
        }
        let out_len = self.output_len(input.len());
        let mut out = Vec::with_capacity(out_len);
        for k in 0..out_len {
            // position in the upsampled stream, centred on the filter
            let j = k * self.down + self.delay;
            let phase = &self.phases[j % self.up];
            // tap i multiplies input[first + i]; clip to the available samples
            let end = j / self.up + 1;
            let first = end as isize - phase.len() as isize;
            let lo = first.max(0) as usize;
            let hi = end.min(input.len());
            if lo >= hi {
                out.push(0.0);
                continue;
            }
            let offset = (lo as isize - first) as usize;
            out.push(dot(&phase[offset..offset + (hi - lo)], &input[lo..hi]));
        }
        out
    }

    pub fn apply(&self, clip: &MonoClip) -> Result<MonoClip> {
        if clip.sample_rate != self.source_rate {
            return Err(Error::InvalidInput(format!(
                "resampler built for {} Hz, clip is {} Hz",
                self.source_rate, clip.sample_rate
            )));
        }
        MonoClip::new(self.process(&clip.samples), self.target_rate)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Resamples a mono clip to `target_rate`. Equal rates return the input unchanged.
pub fn resample(clip: &MonoClip, target_rate: u32) -> Result<MonoClip> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    Resampler::new(clip.sample_rate, target_rate)?.apply(clip)
}

pub fn reduced_ratio(source_rate: u32, target_rate: u32) -> (usize, usize) {
    let g = gcd(source_rate as u64, target_rate as u64);
    (
        (target_rate as u64 / g) as usize,
        (source_rate as u64 / g) as usize,
    )
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn kaiser_beta(attenuation_db: f64) -> f64 {
    if attenuation_db > 50.0 {
        0.1102 * (attenuation_db - 8.7)
    } else if attenuation_db >= 21.0 {
        0.5842 * (attenuation_db - 21.0).powf(0.4) + 0.07886 * (attenuation_db - 21.0)
    } else {
        0.0
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Windowed-sinc low-pass with normalized cutoff `fc` (cycles/sample), scaled to DC gain `gain`.
fn kaiser_lowpass(n_taps: usize, fc: f64, beta: f64, gain: f64) -> Vec<f64> {
    let centre = (n_taps - 1) as f64 / 2.0;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = i as f64 - centre;
            let x = 2.0 * fc * t;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            };
            let r = t / centre;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            2.0 * fc * sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for h in &mut taps {
        *h *= gain / sum;
    }
    taps
}

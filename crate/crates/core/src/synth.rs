//! Synthetic container recordings.
//!
//! Each insect contributes a harmonic stack at a random fundamental from its
//! class band. Every partial is amplitude modulated by a slow sinusoidal
//! flight-bout envelope with random phase. The signal is built directly in
//! the frequency domain on the clip's DFT grid, so each component occupies
//! exactly three bins (carrier and two sidebands) and never leaks outside
//! its band. Partials whose sidebands would leave the analysis band are
//! dropped. The four channels mix the same insects with independent gains
//! and add independent Gaussian noise.

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::eval::{ContainerClass, DatasetManifest, ManifestEntry, Role};

const ACTIVITY_SD_DB: f64 = 3.0;
const ACTIVITY_COMPONENTS: usize = 4;
const ENVELOPE_GRID_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WingbeatSpec {
    pub class: ContainerClass,
    pub n_insects: usize,
    pub male_band_hz: (f64, f64),
    pub female_band_hz: (f64, f64),
    /// Relative amplitude of harmonics 1, 2, ...
    pub harmonic_amplitudes: Vec<f64>,
    /// Flight-bout modulation rate range.
    pub am_rate_hz: (f64, f64),
    pub am_depth: (f64, f64),
    /// Fundamental amplitude of one insect.
    pub insect_level: f64,
    /// Gaussian noise standard deviation, in dB relative to full scale.
    pub noise_floor_db: f64,
    /// Partials must stay inside this band.
    pub band_hz: (f64, f64),
    pub duration_s: f64,
    pub sample_rate: u32,
    pub channels: usize,
    /// Standard deviation of the slow common flight-activity envelope, in dB.
    /// Zero disables it.
    pub activity_sd_db: f64,
    /// Frequency range of the activity envelope's components.
    pub activity_rate_hz: (f64, f64),
    /// Time constant of an optional exponential decay of the tonal part.
    pub decay_time_s: Option<f64>,
    pub seed: u64,
}

impl Default for WingbeatSpec {
    fn default() -> Self {
        Self {
            class: ContainerClass::Male,
            n_insects: 250,
            male_band_hz: (650.0, 850.0),
            female_band_hz: (400.0, 600.0),
            harmonic_amplitudes: vec![1.0, 0.5, 0.25],
            am_rate_hz: (0.5, 3.0),
            am_depth: (0.2, 0.8),
            insect_level: 0.005,
            noise_floor_db: -40.0,
            band_hz: (200.0, 2000.0),
            duration_s: 30.0,
            sample_rate: 44_100,
            channels: 4,
            activity_sd_db: ACTIVITY_SD_DB,
            activity_rate_hz: (0.02, 0.25),
            decay_time_s: None,
            seed: 0,
        }
    }
}

impl WingbeatSpec {
    pub fn new(class: ContainerClass, seed: u64) -> Self {
        Self {
            class,
            seed,
            ..Self::default()
        }
    }

    /// Females in the container: all, none, or a quarter rounded half up.
    pub fn female_count(&self) -> usize {
        match self.class {
            ContainerClass::Male => 0,
            ContainerClass::Female => self.n_insects,
            ContainerClass::Mixed => (self.n_insects + 2) / 4,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let band_ok =
            |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi;
        if self.sample_rate == 0 || self.channels == 0 || self.n_samples() < 2 {
            return bad("sample_rate, channels and duration must be positive".into());
        }
        for (name, band) in [
            ("male_band_hz", self.male_band_hz),
            ("female_band_hz", self.female_band_hz),
            ("band_hz", self.band_hz),
            ("am_rate_hz", self.am_rate_hz),
            ("activity_rate_hz", self.activity_rate_hz),
        ] {
            if !band_ok(band) {
                return bad(format!("{name} must be an increasing positive range"));
            }
        }
        if self.band_hz.1 >= self.sample_rate as f64 / 2.0 {
            return bad("band_hz exceeds Nyquist".into());
        }
        for (lo, hi) in [self.male_band_hz, self.female_band_hz] {
            if hi - lo <= 2.0 * self.am_rate_hz.1 {
                return bad("class bands must be wider than twice the modulation rate".into());
            }
        }
        let (d0, d1) = self.am_depth;
        if !(0.0 <= d0 && d0 <= d1 && d1 <= 1.0) {
            return bad("am_depth must lie in [0, 1]".into());
        }
        if self.harmonic_amplitudes.is_empty()
            || self
                .harmonic_amplitudes
                .iter()
                .any(|a| a.is_nan() || *a < 0.0)
        {
            return bad("harmonic_amplitudes must be non-empty and non-negative".into());
        }
        if !(self.activity_sd_db >= 0.0 && self.activity_sd_db.is_finite()) {
            return bad("activity_sd_db must be non-negative".into());
        }
        if !(self.insect_level >= 0.0 && self.insect_level.is_finite())
            || !self.noise_floor_db.is_finite()
        {
            return bad("insect_level and noise_floor_db must be finite".into());
        }
        if let Some(tau) = self.decay_time_s {
            if tau.is_nan() || tau <= 0.0 {
                return bad("decay_time_s must be positive".into());
            }
        }
        Ok(())
    }
}

/// One sinusoid on the DFT grid.
struct Component {
    bin: usize,
    amplitude: f64,
    phase: f64,
}

thread_local! {
    // plans are cached per length, and every clip of a dataset shares one
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

/// Generates a multi-channel clip, deterministic in the spec (including its seed).
pub fn generate_clip(spec: &WingbeatSpec) -> Result<AudioClip> {
    spec.validate()?;
    let n = spec.n_samples();
    let rate = spec.sample_rate as f64;
    let bin_hz = rate / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_female = spec.female_count();
    let mut spectra = vec![vec![Complex::new(0.0, 0.0); n]; spec.channels];
    for insect in 0..spec.n_insects {
        let (lo, hi) = if insect < n_female {
            spec.female_band_hz
        } else {
            spec.male_band_hz
        };
        let am_max = spec.am_rate_hz.1;
        let f0 = rng.gen_range(lo + am_max..hi - am_max);
        let am_bins = ((rng.gen_range(spec.am_rate_hz.0..=spec.am_rate_hz.1) / bin_hz).round()
            as usize)
            .max(1);
        let depth = rng.gen_range(spec.am_depth.0..=spec.am_depth.1);
        let am_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let gains: Vec<f64> = (0..spec.channels)
            .map(|_| rng.gen_range(0.5..=1.0))
            .collect();

        let mut components = Vec::new();
        for (h, &rel) in spec.harmonic_amplitudes.iter().enumerate() {
            let carrier = ((f0 * (h + 1) as f64) / bin_hz).round() as usize;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let lowest = carrier.saturating_sub(am_bins) as f64 * bin_hz;
            let highest = (carrier + am_bins) as f64 * bin_hz;
            if carrier <= am_bins || lowest < spec.band_hz.0 || highest > spec.band_hz.1 {
                continue;
            }
            let a = spec.insect_level * rel;
            // (1 + m cos(ωt + ψ)) cos(Ωt + φ)
            components.push(Component {
                bin: carrier,
                amplitude: a,
                phase,
            });
            components.push(Component {
                bin: carrier + am_bins,
                amplitude: a * depth / 2.0,
                phase: phase + am_phase,
            });
            components.push(Component {
                bin: carrier - am_bins,
                amplitude: a * depth / 2.0,
                phase: phase - am_phase,
            });
        }
        for (spectrum, g) in spectra.iter_mut().zip(&gains) {
            for c in &components {
                let z = Complex::from_polar(g * c.amplitude / 2.0, c.phase);
                spectrum[c.bin] += z;
                spectrum[n - c.bin] += z.conj();
            }
        }
    }

    // two real channels per complex inverse FFT: x_a + i x_b
    let ifft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(spec.channels);
    for pair in spectra.chunks(2) {
        let mut buf: Vec<Complex<f64>> = match pair {
            [a, b] => a
                .iter()
                .zip(b)
                .map(|(x, y)| *x + Complex::<f64>::i() * *y)
                .collect(),
            [a] => a.clone(),
            _ => unreachable!(),
        };
        ifft.process(&mut buf);
        channels.push(buf.iter().map(|z| z.re).collect());
        if pair.len() == 2 {
            channels.push(buf.iter().map(|z| z.im).collect());
        }
    }

    if let Some(env) = tonal_envelope(spec, &mut rng) {
        for ch in &mut channels {
            for (v, g) in ch.iter_mut().zip(&env) {
                *v *= g;
            }
        }
    }

    let sigma = 10f64.powf(spec.noise_floor_db / 20.0);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut clipped = 0usize;
    for (c, ch) in channels.iter_mut().enumerate() {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        noise_rng.set_stream(1 + c as u64);
        for v in ch.iter_mut() {
            let x = *v + noise.sample(&mut noise_rng);
            if x.abs() > 1.0 {
                clipped += 1;
            }
            *v = x.clamp(-1.0, 1.0);
        }
    }
    if clipped > 0 {
        log::warn!(
            "synthetic clip (seed {}) clipped {clipped} samples",
            spec.seed
        );
    }
    AudioClip::new(channels, spec.sample_rate)
}

/// Gain applied to the tonal part over time: the common activity envelope
/// `10^(a(t) / 20)`, where `a` is a sum of random-phase sinusoids with
/// standard deviation `activity_sd_db`, times the optional decay.
fn tonal_envelope(spec: &WingbeatSpec, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let n = spec.n_samples();
    let rate = spec.sample_rate as f64;
    let components: Vec<(f64, f64)> = (0..ACTIVITY_COMPONENTS)
        .map(|_| {
            let f = rng.gen_range(spec.activity_rate_hz.0..=spec.activity_rate_hz.1);
            (f, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    if spec.activity_sd_db == 0.0 && spec.decay_time_s.is_none() {
        return None;
    }
    // each unit-amplitude sinusoid has variance 1/2
    let amp = spec.activity_sd_db * (2.0 / ACTIVITY_COMPONENTS as f64).sqrt();
    let gain = |t: f64| {
        let db: f64 = components
            .iter()
            .map(|(f, phi)| amp * (std::f64::consts::TAU * f * t + phi).cos())
            .sum();
        let decay = spec.decay_time_s.map_or(1.0, |tau| (-t / tau).exp());
        10f64.powf(db / 20.0) * decay
    };
    // The activity envelope is far slower than the grid, so only the decay
    // needs exact evaluation; a short decay falls back to every sample.
    let step = match spec.decay_time_s {
        Some(tau) if tau < 1.0 => 1,
        _ => ((rate * ENVELOPE_GRID_S) as usize).max(1),
    };
    let knots: Vec<f64> = (0..=n.div_ceil(step))
        .map(|k| gain((k * step) as f64 / rate))
        .collect();
    Some(
        (0..n)
            .map(|i| {
                let (k, r) = (i / step, (i % step) as f64 / step as f64);
                knots[k] + r * (knots[k + 1] - knots[k])
            })
            .collect(),
    )
}

/// Recording containers generated per day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Container {
    TrainMale,
    TestMale,
    Female,
    Mixed,
}

impl Container {
    pub const ALL: [Container; 4] = [
        Container::TrainMale,
        Container::TestMale,
        Container::Female,
        Container::Mixed,
    ];

    pub fn class(self) -> ContainerClass {
        match self {
            Container::TrainMale | Container::TestMale => ContainerClass::Male,
            Container::Female => ContainerClass::Female,
            Container::Mixed => ContainerClass::Mixed,
        }
    }

    pub fn role(self) -> Role {
        match self {
            Container::TrainMale => Role::Train,
            _ => Role::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Container::TrainMale => "train_male",
            Container::TestMale => "test_male",
            Container::Female => "female",
            Container::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLayout {
    pub days: Vec<u32>,
    pub clips_per_container: usize,
    /// Per-container overrides of `clips_per_container`.
    #[serde(default)]
    pub counts: Vec<(Container, usize)>,
}

impl DatasetLayout {
    /// Days 6 to 9, 16 clips of each container per day.
    pub fn field_trial() -> Self {
        Self::custom(vec![6, 7, 8, 9], 16)
    }

    pub fn custom(days: Vec<u32>, clips_per_container: usize) -> Self {
        Self {
            days,
            clips_per_container,
            counts: Vec::new(),
        }
    }

    pub fn with_count(mut self, container: Container, count: usize) -> Self {
        self.counts.retain(|(c, _)| *c != container);
        self.counts.push((container, count));
        self
    }

    pub fn count(&self, container: Container) -> usize {
        self.counts
            .iter()
            .find(|(c, _)| *c == container)
            .map_or(self.clips_per_container, |(_, n)| *n)
    }

    pub fn total_clips(&self) -> usize {
        self.days.len() * Container::ALL.iter().map(|&c| self.count(c)).sum::<usize>()
    }
}

/// A clip to generate: where it goes and how it is labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedClip {
    pub entry: ManifestEntry,
    pub spec: WingbeatSpec,
}

/// Lays out the dataset without generating audio. Clip `k` of a container
/// belongs to session 1 for the first half of the clips and session 2 for
/// the rest. Per-clip seeds are drawn from independent streams of `seed`.
pub fn plan_dataset(layout: &DatasetLayout, base: &WingbeatSpec, seed: u64) -> Vec<PlannedClip> {
    let mut out = Vec::with_capacity(layout.total_clips());
    let mut ordinal = 0u64;
    for &day in &layout.days {
        for container in Container::ALL {
            let count = layout.count(container);
            for k in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(ordinal);
                ordinal += 1;
                let clip_id = format!("d{day}_{}_{k:02}", container.as_str());
                out.push(PlannedClip {
                    entry: ManifestEntry {
                        path: PathBuf::from(format!("day{day}")).join(format!("{clip_id}.wav")),
                        clip_id,
                        container_class: container.class(),
                        day_since_sexing: day,
                        session: if 2 * k < count { 1 } else { 2 },
                        role: container.role(),
                    },
                    spec: WingbeatSpec {
                        class: container.class(),
                        seed: rng.next_u64(),
                        ..base.clone()
                    },
                });
            }
        }
    }
    out
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every clip of the layout as 16-bit WAV under `out_dir`, plus
/// `manifest.json`. Returns the manifest with `out_dir` as its base.
pub fn generate_dataset(
    layout: &DatasetLayout,
    base: &WingbeatSpec,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    base.validate()?;
    let plan = plan_dataset(layout, base, seed);
    for day in &layout.days {
        let dir = out_dir.join(format!("day{day}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))?;
    }
    plan.par_iter().try_for_each(|p| {
        let clip = generate_clip(&p.spec)?;
        write_wav(&clip, out_dir.join(&p.entry.path))
    })?;
    let manifest =
        DatasetManifest::new(plan.into_iter().map(|p| p.entry).collect())?.with_base_dir(out_dir);
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

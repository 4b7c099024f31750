//! Additive noise at a controlled signal-to-noise ratio.

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dsp::mean_power;
use crate::signal::{read_wav, resample, seeded_rng, Rng, Signal};
use crate::{Error, Result};

/// Built-in noise generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    /// Several amplitude-modulated band-limited "talkers"; non-stationary.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }

    /// Generates `len` samples of this noise at `sample_rate`.
    pub fn generate(self, len: usize, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
        match self {
            NoiseKind::White => (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            NoiseKind::Pink => pink(len, rng),
            NoiseKind::Babble => babble(len, sample_rate, rng),
        }
    }
}

// Paul Kellet's economy pink filter.
fn pink(len: usize, rng: &mut Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..len)
        .map(|_| {
            let w: f64 = rng.gen_range(-1.0..1.0);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            (b0 + b1 + b2 + w * 0.1848) * 0.2
        })
        .collect()
}

fn babble(len: usize, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let talkers = rng.gen_range(3..=6);
    for _ in 0..talkers {
        // band-pass white noise through a two-pole resonator
        let centre = rng.gen_range(300.0..2500.0);
        let r: f64 = (-std::f64::consts::PI * 300.0 / fs).exp();
        let c = 2.0 * r * (2.0 * std::f64::consts::PI * centre / fs).cos();
        let syllable_hz = rng.gen_range(3.0..6.0);
        let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (mut y1, mut y2) = (0.0, 0.0);
        for (n, o) in out.iter_mut().enumerate() {
            let w: f64 = rng.gen_range(-1.0..1.0);
            let y = w * (1.0 - r) + c * y1 - r * r * y2;
            y2 = y1;
            y1 = y;
            let env = 0.5 + 0.5 * (std::f64::consts::TAU * syllable_hz * n as f64 / fs + phase0).sin();
            *o += y * env * env;
        }
    }
    out
}

/// Noise material to mix in.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// Uniform choice among built-in generators.
    Generated(Vec<NoiseKind>),
    /// Uniform choice among recordings loaded from a directory.
    Files(Arc<Vec<(String, Signal)>>),
}

impl Default for NoiseSource {
    fn default() -> Self {
        NoiseSource::Generated(NoiseKind::ALL.to_vec())
    }
}

impl NoiseSource {
    /// Loads every `.wav` file in a flat directory, resampled to `sample_rate`.
    /// Files are sorted by name so selection by index is reproducible.
    pub fn from_dir(dir: impl AsRef<Path>, sample_rate: u32) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            })
            .collect();
        paths.sort();
        let mut clips = Vec::new();
        for p in paths {
            let s = resample(&read_wav(&p)?, sample_rate)?;
            if mean_power(s.samples()) > 0.0 {
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                clips.push((name, s));
            }
        }
        if clips.is_empty() {
            return Err(Error::Validation(format!(
                "no non-silent WAV files in {}",
                dir.display()
            )));
        }
        Ok(NoiseSource::Files(Arc::new(clips)))
    }

    pub(crate) fn choice_count(&self) -> usize {
        match self {
            NoiseSource::Generated(kinds) => kinds.len(),
            NoiseSource::Files(files) => files.len(),
        }
    }

    pub(crate) fn choice_name(&self, index: usize) -> String {
        match self {
            NoiseSource::Generated(kinds) => kinds[index].name().to_string(),
            NoiseSource::Files(files) => files[index].0.clone(),
        }
    }

    /// Noise material for choice `index`; generated noise uses `seed`.
    pub(crate) fn material(&self, index: usize, len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
        match self {
            NoiseSource::Generated(kinds) => {
                kinds[index].generate(len, sample_rate, &mut seeded_rng(seed))
            }
            NoiseSource::Files(files) => files[index].1.samples().to_vec(),
        }
    }
}

/// Gain `beta` such that `x + beta * n` has the requested SNR, given the mean
/// powers of `x` and `n`.
pub fn noise_gain(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes `noise` into `signal` at `snr_db`.
///
/// The noise is looped (when shorter) or cropped to the signal length starting
/// from a random offset drawn from `rng`. Powers are measured on exactly the
/// segment that is mixed in, so the achieved SNR matches the request.
pub fn add_noise(signal: &Signal, noise: &[f64], snr_db: f64, rng: &mut Rng) -> Result<Signal> {
    if !snr_db.is_finite() {
        return Err(Error::Validation("SNR must be finite".into()));
    }
    if noise.is_empty() || noise.iter().all(|v| *v == 0.0) {
        return Err(Error::Validation("noise is silent".into()));
    }
    let p_x = mean_power(signal.samples());
    if p_x == 0.0 {
        return Err(Error::Validation("signal is silent".into()));
    }
    let offset = rng.gen_range(0..noise.len());
    let segment: Vec<f64> = (0..signal.len())
        .map(|i| noise[(offset + i) % noise.len()])
        .collect();
    let p_n = mean_power(&segment);
    if p_n == 0.0 {
        return Err(Error::Validation("selected noise segment is silent".into()));
    }
    let beta = noise_gain(p_x, p_n, snr_db);
    let mixed = signal
        .samples()
        .iter()
        .zip(&segment)
        .map(|(x, n)| x + beta * n)
        .collect();
    Ok(signal.with_samples(mixed))
}

//! Synthetic "phoneme-like" speech corpus.
//!
//! Each utterance is a chain of segments. A segment is a harmonic source at
//! a random fundamental shaped by the two-formant envelope of one phoneme
//! from a fixed random inventory. Neighbouring segments are joined by short
//! complementary cross-fades and never repeat the same phoneme.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::signal::{derive_seed, seeded_rng, write_wav, Rng, Signal, CANONICAL_SAMPLE_RATE};
use crate::{Error, Result};

/// Corpus size and shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub min_duration_secs: f64,
    pub max_duration_secs: f64,
    /// Number of distinct phonemes in the inventory.
    pub phonemes: usize,
    pub sample_rate: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_utterances: 500,
            dev_utterances: 100,
            min_duration_secs: 2.0,
            max_duration_secs: 6.0,
            phonemes: 16,
            sample_rate: CANONICAL_SAMPLE_RATE,
        }
    }
}

pub const MIN_SEGMENTS: usize = 5;
pub const MAX_SEGMENTS: usize = 20;
pub const MIN_SEGMENT_SECS: f64 = 0.08;
pub const MAX_SEGMENT_SECS: f64 = 0.3;
pub const CROSSFADE_SECS: f64 = 0.01;
const F0_RANGE: (f64, f64) = (100.0, 300.0);
const NOISE_FLOOR: f64 = 1e-3;
const PEAK: f64 = 0.8;

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_utterances + self.dev_utterances == 0 {
            return Err(Error::Validation("corpus needs at least one utterance".into()));
        }
        if self.phonemes < 2 {
            return Err(Error::Validation("need at least two phonemes to avoid repeats".into()));
        }
        let lo = MIN_SEGMENTS as f64 * MIN_SEGMENT_SECS;
        let hi = MAX_SEGMENTS as f64 * MAX_SEGMENT_SECS;
        if !(self.min_duration_secs >= lo
            && self.max_duration_secs <= hi
            && self.min_duration_secs <= self.max_duration_secs)
        {
            return Err(Error::Validation(format!(
                "duration range must lie within [{lo}, {hi}] seconds"
            )));
        }
        if self.sample_rate < 2 * 4000 {
            return Err(Error::Validation("sample rate too low for the formant range".into()));
        }
        Ok(())
    }
}

/// Two-formant vocal-tract shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phoneme {
    pub f1: f64,
    pub f2: f64,
    pub bw1: f64,
    pub bw2: f64,
}

impl Phoneme {
    /// Magnitude of the cascaded second-order resonators at `freq`, unity at DC.
    pub fn response(&self, freq: f64) -> f64 {
        resonance(freq, self.f1, self.bw1) * resonance(freq, self.f2, self.bw2)
    }
}

fn resonance(f: f64, center: f64, bandwidth: f64) -> f64 {
    let r = f / center;
    1.0 / ((1.0 - r * r).powi(2) + (f * bandwidth / (center * center)).powi(2)).sqrt()
}

pub fn sample_inventory(n: usize, rng: &mut Rng) -> Vec<Phoneme> {
    (0..n)
        .map(|_| {
            let f1 = rng.gen_range(250.0..850.0);
            let f2 = rng.gen_range((f1 + 400.0_f64).max(900.0)..2600.0);
            Phoneme {
                f1,
                f2,
                bw1: rng.gen_range(60.0..120.0),
                bw2: rng.gen_range(80.0..160.0),
            }
        })
        .collect()
}

/// One segment of a generated utterance, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub phoneme: usize,
    pub f0: f64,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub signal: Signal,
    pub segments: Vec<Segment>,
}

/// Splits `total` seconds into `n` durations inside the segment bounds.
fn segment_durations(n: usize, total: f64, rng: &mut Rng) -> Vec<f64> {
    let mut d = vec![MIN_SEGMENT_SECS; n];
    let mut remaining = total - MIN_SEGMENT_SECS * n as f64;
    let room = MAX_SEGMENT_SECS - MIN_SEGMENT_SECS;
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    while remaining > 1e-12 {
        let open: Vec<usize> = (0..n).filter(|&i| d[i] < MIN_SEGMENT_SECS + room - 1e-12).collect();
        if open.is_empty() {
            break;
        }
        let w: f64 = open.iter().map(|&i| weights[i]).sum();
        let mut used = 0.0;
        for &i in &open {
            let give = (remaining * weights[i] / w).min(MIN_SEGMENT_SECS + room - d[i]);
            d[i] += give;
            used += give;
        }
        remaining -= used;
    }
    d
}

/// Generates one utterance of `duration_secs` seconds.
pub fn synth_utterance(
    inventory: &[Phoneme],
    duration_secs: f64,
    sample_rate: u32,
    rng: &mut Rng,
) -> Result<SynthUtterance> {
    if inventory.len() < 2 {
        return Err(Error::Validation("inventory needs at least two phonemes".into()));
    }
    let sr = sample_rate as f64;
    let total = (duration_secs * sr).round() as usize;
    let min_n = ((duration_secs / MAX_SEGMENT_SECS).ceil() as usize).max(MIN_SEGMENTS);
    let max_n = ((duration_secs / MIN_SEGMENT_SECS).floor() as usize).min(MAX_SEGMENTS);
    if min_n > max_n {
        return Err(Error::Validation(format!(
            "{duration_secs} s cannot be split into {MIN_SEGMENTS}-{MAX_SEGMENTS} segments"
        )));
    }
    let n = rng.gen_range(min_n..=max_n);
    let durations = segment_durations(n, duration_secs, rng);

    let mut segments = Vec::with_capacity(n);
    let mut start = 0usize;
    let mut elapsed = 0.0;
    let mut prev: Option<usize> = None;
    for (i, d) in durations.iter().enumerate() {
        elapsed += d;
        let end = if i + 1 == n { total } else { ((elapsed * sr).round() as usize).min(total) };
        let phoneme = loop {
            let p = rng.gen_range(0..inventory.len());
            if Some(p) != prev {
                break p;
            }
        };
        prev = Some(phoneme);
        segments.push(Segment {
            phoneme,
            f0: rng.gen_range(F0_RANGE.0..F0_RANGE.1),
            start,
            len: end - start,
        });
        start = end;
    }

    let half_fade = ((CROSSFADE_SECS * sr) / 2.0).round() as usize;
    let mut out = vec![0.0; total];
    for (i, seg) in segments.iter().enumerate() {
        let ph = &inventory[seg.phoneme];
        let gain = rng.gen_range(0.5..1.0);
        let harmonics: Vec<(f64, f64, f64)> = (1..)
            .map(|k| k as f64 * seg.f0)
            .take_while(|f| *f < 0.47 * sr)
            .map(|f| {
                let amp = ph.response(f) * seg.f0 / f;
                (2.0 * PI * f / sr, amp, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        let lo = if i == 0 { 0 } else { seg.start.saturating_sub(half_fade) };
        let hi = if i + 1 == segments.len() { total } else { (seg.start + seg.len + half_fade).min(total) };
        for (n, slot) in out.iter_mut().enumerate().take(hi).skip(lo) {
            let env = fade(n, seg.start, half_fade, i > 0) * (1.0 - fade(n, seg.start + seg.len, half_fade, i + 1 < segments.len()));
            if env == 0.0 {
                continue;
            }
            let t = n as f64;
            let v: f64 = harmonics.iter().map(|(w, a, phi)| a * (w * t + phi).sin()).sum();
            *slot += gain * env * v;
        }
    }

    let peak = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    for v in out.iter_mut() {
        *v += NOISE_FLOOR * rng.gen_range(-1.0..1.0);
    }
    Ok(SynthUtterance {
        signal: Signal::new(out, sample_rate)?,
        segments,
    })
}

/// Raised-cosine step centred on `edge`: 0 before, 1 after. Without a fade
/// it is a hard step.
fn fade(n: usize, edge: usize, half: usize, enabled: bool) -> f64 {
    if !enabled || half == 0 {
        return if n >= edge { 1.0 } else { 0.0 };
    }
    let x = (n as f64 - edge as f64 + half as f64) / (2 * half) as f64;
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        (0.5 * PI * x).sin().powi(2)
    }
}

/// Writes `config.train_utterances + config.dev_utterances` WAV files and a
/// manifest into `out_dir`.
pub fn gen_synth_corpus(config: &CorpusConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let audio = out_dir.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let inventory = sample_inventory(config.phonemes, &mut seeded_rng(derive_seed(seed, "inventory", 0)));

    let total = config.train_utterances + config.dev_utterances;
    let entries: Vec<ManifestEntry> = (0..total)
        .into_par_iter()
        .map(|i| {
            let (split, local) = if i < config.train_utterances {
                (Split::Train, i)
            } else {
                (Split::Dev, i - config.train_utterances)
            };
            let mut rng = seeded_rng(derive_seed(seed, "utterance", i as u64));
            let secs = rng.gen_range(config.min_duration_secs..=config.max_duration_secs);
            let utt = synth_utterance(&inventory, secs, config.sample_rate, &mut rng)?;
            let id = format!("{}-{local:04}", split.name());
            let rel = format!("audio/{id}.wav");
            write_wav(&utt.signal, out_dir.join(&rel))?;
            Ok(ManifestEntry {
                id,
                path: rel.into(),
                split,
            })
        })
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.dataset_id = manifest.content_id()?;
    manifest.save(out_dir.join(super::manifest::MANIFEST_FILE))?;
    Ok(manifest)
}

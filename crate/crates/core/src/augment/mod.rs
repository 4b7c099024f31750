//! Content-preserving signal augmentations.
//!
//! An [`AugmentationSpec`] is a template with a parameter range; drawing from
//! an [`AugmentationSet`] picks a template uniformly, then its parameters
//! uniformly, and yields a concrete [`Augmentation`] that can be applied to
//! any signal. Applying a concrete augmentation is a pure function of its
//! parameters and the input.

mod noise;
mod room;
mod vocoder;

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use noise::{add_noise, noise_gain, NoiseKind, NoiseSource};
pub use room::{reverberate, simulate_rir, ImageSource, RoomConfig, RoomSampler, SPEED_OF_SOUND};
pub use vocoder::{pitch_shift, time_stretch, VOCODER_HOP, VOCODER_WINDOW};

use crate::signal::{seeded_rng, Rng, Signal};
use crate::{Error, Result};

/// The four augmentation families, plus identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Identity,
    Time,
    Pitch,
    Reverb,
    Noise,
}

impl AugmentationKind {
    /// The four families used in robustness reports, in report column order.
    pub const FOUR: [AugmentationKind; 4] = [
        AugmentationKind::Time,
        AugmentationKind::Pitch,
        AugmentationKind::Reverb,
        AugmentationKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Identity => "identity",
            AugmentationKind::Time => "time",
            AugmentationKind::Pitch => "pitch",
            AugmentationKind::Reverb => "reverb",
            AugmentationKind::Noise => "noise",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "time" => Ok(Self::Time),
            "pitch" => Ok(Self::Pitch),
            "reverb" => Ok(Self::Reverb),
            "noise" => Ok(Self::Noise),
            other => Err(Error::Validation(format!("unknown augmentation `{other}`"))),
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An augmentation template with its sampling range.
#[derive(Debug, Clone)]
pub enum AugmentationSpec {
    Identity,
    /// Stretch rate drawn uniformly from `[min_rate, max_rate]`.
    TimeStretch { min_rate: f64, max_rate: f64 },
    /// Integer semitone shift drawn uniformly from `[min, max]`.
    PitchShift { min_semitones: i32, max_semitones: i32 },
    Reverb(RoomSampler),
    /// SNR drawn uniformly from `[min_db, max_db]`.
    Noise {
        min_snr_db: f64,
        max_snr_db: f64,
        source: NoiseSource,
    },
}

impl AugmentationSpec {
    pub fn time_stretch() -> Self {
        AugmentationSpec::TimeStretch {
            min_rate: 0.8,
            max_rate: 1.2,
        }
    }

    pub fn pitch_shift() -> Self {
        AugmentationSpec::PitchShift {
            min_semitones: -4,
            max_semitones: 4,
        }
    }

    pub fn reverb() -> Self {
        AugmentationSpec::Reverb(RoomSampler::default())
    }

    pub fn noise(source: NoiseSource) -> Self {
        AugmentationSpec::Noise {
            min_snr_db: 5.0,
            max_snr_db: 15.0,
            source,
        }
    }

    /// Default template for a family.
    pub fn default_for(kind: AugmentationKind) -> Self {
        match kind {
            AugmentationKind::Identity => AugmentationSpec::Identity,
            AugmentationKind::Time => Self::time_stretch(),
            AugmentationKind::Pitch => Self::pitch_shift(),
            AugmentationKind::Reverb => Self::reverb(),
            AugmentationKind::Noise => Self::noise(NoiseSource::default()),
        }
    }

    pub fn kind(&self) -> AugmentationKind {
        match self {
            AugmentationSpec::Identity => AugmentationKind::Identity,
            AugmentationSpec::TimeStretch { .. } => AugmentationKind::Time,
            AugmentationSpec::PitchShift { .. } => AugmentationKind::Pitch,
            AugmentationSpec::Reverb(_) => AugmentationKind::Reverb,
            AugmentationSpec::Noise { .. } => AugmentationKind::Noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AugmentationSpec::Identity | AugmentationSpec::Reverb(_) => true,
            AugmentationSpec::TimeStretch { min_rate, max_rate } => {
                *min_rate > 0.0 && min_rate <= max_rate && max_rate.is_finite()
            }
            AugmentationSpec::PitchShift {
                min_semitones,
                max_semitones,
            } => min_semitones <= max_semitones,
            AugmentationSpec::Noise {
                min_snr_db,
                max_snr_db,
                source,
            } => min_snr_db <= max_snr_db && max_snr_db.is_finite() && source.choice_count() > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid augmentation range: {self:?}")))
        }
    }

    /// Draws concrete parameters from this template's range.
    pub fn sample(&self, rng: &mut Rng) -> Augmentation {
        match self {
            AugmentationSpec::Identity => Augmentation::Identity,
            AugmentationSpec::TimeStretch { min_rate, max_rate } => Augmentation::TimeStretch {
                rate: rng.gen_range(*min_rate..=*max_rate),
            },
            AugmentationSpec::PitchShift {
                min_semitones,
                max_semitones,
            } => Augmentation::PitchShift {
                semitones: rng.gen_range(*min_semitones..=*max_semitones),
            },
            AugmentationSpec::Reverb(sampler) => Augmentation::Reverb {
                room: sampler.sample(rng),
            },
            AugmentationSpec::Noise {
                min_snr_db,
                max_snr_db,
                source,
            } => Augmentation::Noise {
                snr_db: rng.gen_range(*min_snr_db..=*max_snr_db),
                choice: rng.gen_range(0..source.choice_count()),
                noise_seed: rng.gen(),
                offset_seed: rng.gen(),
                source: source.clone(),
            },
        }
    }
}

/// A concrete transform with fixed parameters.
#[derive(Debug, Clone)]
pub enum Augmentation {
    Identity,
    TimeStretch {
        rate: f64,
    },
    PitchShift {
        semitones: i32,
    },
    Reverb {
        room: RoomConfig,
    },
    Noise {
        snr_db: f64,
        choice: usize,
        noise_seed: u64,
        offset_seed: u64,
        source: NoiseSource,
    },
}

impl Augmentation {
    pub fn kind(&self) -> AugmentationKind {
        match self {
            Augmentation::Identity => AugmentationKind::Identity,
            Augmentation::TimeStretch { .. } => AugmentationKind::Time,
            Augmentation::PitchShift { .. } => AugmentationKind::Pitch,
            Augmentation::Reverb { .. } => AugmentationKind::Reverb,
            Augmentation::Noise { .. } => AugmentationKind::Noise,
        }
    }

    pub fn apply(&self, signal: &Signal) -> Result<Signal> {
        match self {
            Augmentation::Identity => Ok(signal.clone()),
            Augmentation::TimeStretch { rate } => time_stretch(signal, *rate),
            Augmentation::PitchShift { semitones } => pitch_shift(signal, *semitones),
            Augmentation::Reverb { room } => {
                let rir = simulate_rir(room, signal.sample_rate())?;
                reverberate(signal, &rir)
            }
            Augmentation::Noise {
                snr_db,
                choice,
                noise_seed,
                offset_seed,
                source,
            } => {
                let material =
                    source.material(*choice, signal.len(), signal.sample_rate(), *noise_seed);
                add_noise(signal, &material, *snr_db, &mut seeded_rng(*offset_seed))
            }
        }
    }

    /// Short human-readable parameter summary, used in report records.
    pub fn describe(&self) -> String {
        match self {
            Augmentation::Identity => "identity".into(),
            Augmentation::TimeStretch { rate } => format!("time rate={rate:.4}"),
            Augmentation::PitchShift { semitones } => format!("pitch semitones={semitones}"),
            Augmentation::Reverb { room } => format!(
                "reverb dims=[{:.2},{:.2},{:.2}] absorption={:.3} order={}",
                room.dims[0], room.dims[1], room.dims[2], room.absorption, room.max_order
            ),
            Augmentation::Noise {
                snr_db,
                choice,
                source,
                ..
            } => format!("noise snr_db={snr_db:.3} source={}", source.choice_name(*choice)),
        }
    }
}

/// A non-empty collection of augmentation templates, sampled uniformly.
#[derive(Debug, Clone)]
pub struct AugmentationSet {
    templates: Vec<AugmentationSpec>,
}

impl AugmentationSet {
    pub fn new(templates: Vec<AugmentationSpec>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::Validation("augmentation set is empty".into()));
        }
        for t in &templates {
            t.validate()?;
        }
        Ok(Self { templates })
    }

    /// All four families with their default ranges.
    pub fn all_four() -> Self {
        Self {
            templates: AugmentationKind::FOUR
                .iter()
                .map(|k| AugmentationSpec::default_for(*k))
                .collect(),
        }
    }

    pub fn identity() -> Self {
        Self {
            templates: vec![AugmentationSpec::Identity],
        }
    }

    pub fn single(spec: AugmentationSpec) -> Result<Self> {
        Self::new(vec![spec])
    }

    pub fn templates(&self) -> &[AugmentationSpec] {
        &self.templates
    }

    /// Draws a template uniformly, then its parameters uniformly.
    pub fn sample(&self, rng: &mut Rng) -> Augmentation {
        let i = rng.gen_range(0..self.templates.len());
        self.templates[i].sample(rng)
    }
}

/// Draws a concrete augmentation from `set`.
pub fn sample_augmentation(set: &AugmentationSet, rng: &mut Rng) -> Augmentation {
    set.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_rejected() {
        assert!(matches!(AugmentationSet::new(vec![]), Err(Error::Validation(_))));
        let bad = AugmentationSpec::TimeStretch {
            min_rate: 1.2,
            max_rate: 0.8,
        };
        assert!(AugmentationSet::single(bad).is_err());
    }

    #[test]
    fn time_stretch_draws_are_reproducible_and_in_range() {
        let set = AugmentationSet::single(AugmentationSpec::time_stretch()).unwrap();
        let draw = |seed| match set.sample(&mut seeded_rng(seed)) {
            Augmentation::TimeStretch { rate } => rate,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(draw(5), draw(5));
        for seed in 0..200 {
            let r = draw(seed);
            assert!((0.8..=1.2).contains(&r));
        }
    }

    #[test]
    fn degenerate_range_is_constant() {
        let set = AugmentationSet::single(AugmentationSpec::TimeStretch {
            min_rate: 1.0,
            max_rate: 1.0,
        })
        .unwrap();
        let mut rng = seeded_rng(0);
        for _ in 0..20 {
            assert!(matches!(set.sample(&mut rng), Augmentation::TimeStretch { rate } if rate == 1.0));
        }
    }

    #[test]
    fn template_choice_is_uniform() {
        let set = AugmentationSet::new(vec![
            AugmentationSpec::time_stretch(),
            AugmentationSpec::pitch_shift(),
        ])
        .unwrap();
        let mut rng = seeded_rng(11);
        let n = 10_000;
        let time = (0..n)
            .filter(|_| set.sample(&mut rng).kind() == AugmentationKind::Time)
            .count();
        let freq = time as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
    }

    #[test]
    fn pitch_draws_are_integers_in_range() {
        let spec = AugmentationSpec::pitch_shift();
        let mut rng = seeded_rng(2);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..500 {
            if let Augmentation::PitchShift { semitones } = spec.sample(&mut rng) {
                assert!((-4..=4).contains(&semitones));
                seen.insert(semitones);
            }
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn every_kind_applies_deterministically() {
        let x = Signal::sine(220.0, 0.4, 8000, 16000);
        let set = AugmentationSet::all_four();
        for seed in 0..8 {
            let aug = set.sample(&mut seeded_rng(seed));
            let a = aug.apply(&x).unwrap();
            let b = set.sample(&mut seeded_rng(seed)).apply(&x).unwrap();
            assert_eq!(a, b, "{}", aug.describe());
            assert!(!a.is_empty());
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AugmentationKind::FOUR {
            assert_eq!(AugmentationKind::parse(k.name()).unwrap(), k);
        }
        assert!(AugmentationKind::parse("chorus").is_err());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::CorpusConfig;
use super::manifest::{short_hash, Split};
use crate::augment::{AugmentationKind, AugmentationSet, AugmentationSpec, NoiseKind, NoiseSource, RoomSampler};
use crate::encoder::EncoderConfig;
use crate::quantizer::KMeansConfig;
use crate::robustness::Aggregation;
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Parameter ranges of the four augmentation families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub stretch_rate: [f64; 2],
    pub pitch_semitones: [i32; 2],
    pub room: RoomSampler,
    pub snr_db: [f64; 2],
    pub noise_kinds: Vec<NoiseKind>,
    /// Mix recordings from this directory instead of generated noise.
    pub noise_dir: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            stretch_rate: [0.8, 1.2],
            pitch_semitones: [-4, 4],
            room: RoomSampler::default(),
            snr_db: [5.0, 15.0],
            noise_kinds: NoiseKind::ALL.to_vec(),
            noise_dir: None,
        }
    }
}

impl AugmentConfig {
    pub fn spec(&self, kind: AugmentationKind) -> Result<AugmentationSpec> {
        let spec = match kind {
            AugmentationKind::Identity => AugmentationSpec::Identity,
            AugmentationKind::Time => AugmentationSpec::TimeStretch {
                min_rate: self.stretch_rate[0],
                max_rate: self.stretch_rate[1],
            },
            AugmentationKind::Pitch => AugmentationSpec::PitchShift {
                min_semitones: self.pitch_semitones[0],
                max_semitones: self.pitch_semitones[1],
            },
            AugmentationKind::Reverb => AugmentationSpec::Reverb(self.room.clone()),
            AugmentationKind::Noise => AugmentationSpec::Noise {
                min_snr_db: self.snr_db[0],
                max_snr_db: self.snr_db[1],
                source: match &self.noise_dir {
                    Some(dir) => NoiseSource::from_dir(dir, crate::signal::CANONICAL_SAMPLE_RATE)?,
                    None => NoiseSource::Generated(self.noise_kinds.clone()),
                },
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn set(&self, kinds: &[AugmentationKind]) -> Result<AugmentationSet> {
        AugmentationSet::new(kinds.iter().map(|k| self.spec(*k)).collect::<Result<_>>()?)
    }
}

/// Parses `time`, `pitch`, `reverb`, `noise`, `identity`, `all`, or a
/// comma-separated list of them.
pub fn parse_aug_selection(text: &str) -> Result<Vec<AugmentationKind>> {
    let mut kinds = Vec::new();
    for part in text.split(',').map(str::trim) {
        if part.eq_ignore_ascii_case("all") {
            kinds.extend(AugmentationKind::FOUR);
        } else {
            kinds.push(AugmentationKind::parse(part)?);
        }
    }
    kinds.sort();
    kinds.dedup();
    if kinds.is_empty() {
        return Err(Error::Validation("empty augmentation selection".into()));
    }
    Ok(kinds)
}

/// UED evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub trials_per_sample: usize,
    pub aggregation: Aggregation,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials_per_sample: 1,
            aggregation: Aggregation::Mean,
            split: Split::Dev,
        }
    }
}

/// Everything an experiment command needs. Every field has a default, so a
/// JSON config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed; commands refuse to run without one.
    pub seed: Option<u64>,
    pub units: usize,
    pub rounds: usize,
    pub augmentations: Vec<AugmentationKind>,
    pub encoder: EncoderConfig,
    pub kmeans: KMeansConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub corpus: CorpusConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            units: 50,
            rounds: 1,
            augmentations: AugmentationKind::FOUR.to_vec(),
            encoder: EncoderConfig::default(),
            kmeans: KMeansConfig::default(),
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            corpus: CorpusConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Validation("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.units < 2 {
            return Err(Error::Validation("trained quantizers need K >= 2".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Validation("rounds must be at least 1".into()));
        }
        if self.augmentations.is_empty() {
            return Err(Error::Validation("no augmentations selected".into()));
        }
        self.encoder.validate()?;
        self.train.validate()?;
        self.corpus.validate()
    }

    /// Training settings with the experiment seed applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.seed()?,
            ..self.train.clone()
        })
    }

    /// Short SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        short_hash(&Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_parsing() {
        assert_eq!(parse_aug_selection("all").unwrap(), AugmentationKind::FOUR.to_vec());
        assert_eq!(
            parse_aug_selection("noise,time").unwrap(),
            vec![AugmentationKind::Time, AugmentationKind::Noise]
        );
        assert!(parse_aug_selection("echo").is_err());
    }

    #[test]
    fn partial_json_overrides_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"seed": 3, "units": 10, "train": {"batch_size": 8}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.units, 10);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.learning_rate, 1e-4);
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_required() {
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn hash_ignores_out_dir() {
        let a = ExperimentConfig { seed: Some(1), ..Default::default() };
        let b = ExperimentConfig { out_dir: "elsewhere".into(), ..a.clone() };
        let c = ExperimentConfig { units: 20, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn default_specs_validate() {
        let cfg = AugmentConfig::default();
        for k in AugmentationKind::FOUR {
            assert_eq!(cfg.spec(k).unwrap().kind(), k);
        }
    }
}

//! Unit edit distance (UED): how much a quantizer's deduplicated output
//! changes when the input is augmented.
//!
//! For one sample `x`, augmentation `g`, encoder `f` and quantizer `E`:
//!
//! ```text
//! UED(x) = LEV(dedup(E(f(x))), dedup(E(f(g(x))))) / T'(x)
//! ```
//!
//! where `T'(x)` is the frame count of the clean sample. Dataset reports
//! average (or sum) the per-sample values and multiply by 100.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{Augmentation, AugmentationKind, AugmentationSet};
use crate::encoder::FrameEncoder;
use crate::quantizer::{dedup, Quantize};
use crate::signal::{derive_seed, seeded_rng, Signal, Utterance};
use crate::{Error, Result};

/// Minimum number of insertions, deletions and substitutions turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (row[j] + 1)
                .min(row[j + 1] + 1)
                .min(diag + usize::from(x != y));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// UED of one pair of raw unit sequences, normalized by `clean_frames`.
pub fn ued_from_units(clean: &[u32], augmented: &[u32], clean_frames: usize) -> f64 {
    levenshtein(&dedup(clean), &dedup(augmented)) as f64 / clean_frames as f64
}

/// Distance details for one (sample, augmentation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UedMeasurement {
    pub clean_frames: usize,
    pub clean_dedup_len: usize,
    pub augmented_dedup_len: usize,
    pub distance: usize,
    pub ratio: f64,
}

/// UED for a single sample; `None` when the clean sample has no frames.
pub fn ued_sample(
    quantizer: &dyn Quantize,
    encoder: &dyn FrameEncoder,
    augmentation: &Augmentation,
    x: &Signal,
) -> Result<Option<UedMeasurement>> {
    let clean = dedup(quantizer.quantize(&encoder.encode(x)?)?.units());
    ued_against(quantizer, encoder, augmentation, x, &clean)
}

fn ued_against(
    quantizer: &dyn Quantize,
    encoder: &dyn FrameEncoder,
    augmentation: &Augmentation,
    x: &Signal,
    clean_dedup: &[u32],
) -> Result<Option<UedMeasurement>> {
    let clean_frames = encoder.frame_count(x.len());
    if clean_frames == 0 {
        return Ok(None);
    }
    let augmented = augmentation.apply(x)?;
    let aug_units = dedup(quantizer.quantize(&encoder.encode(&augmented)?)?.units());
    let distance = levenshtein(clean_dedup, &aug_units);
    Ok(Some(UedMeasurement {
        clean_frames,
        clean_dedup_len: clean_dedup.len(),
        augmented_dedup_len: aug_units.len(),
        distance,
        ratio: distance as f64 / clean_frames as f64,
    }))
}

/// How per-sample ratios are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    /// Plain sum over samples, as the metric is literally written.
    Sum,
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UedOptions {
    pub seed: u64,
    pub trials_per_sample: usize,
    pub aggregation: Aggregation,
}

impl Default for UedOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials_per_sample: 1,
            aggregation: Aggregation::Mean,
        }
    }
}

/// One evaluated (sample, trial, augmentation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub augmentation: AugmentationKind,
    pub trial: usize,
    pub params: String,
    #[serde(flatten)]
    pub measurement: UedMeasurement,
}

/// Aggregate for one augmentation family, scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub augmentation: AugmentationKind,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Dataset-level robustness report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UedReport {
    pub tool_version: String,
    pub quantizer_id: String,
    pub dataset_id: String,
    pub num_units: usize,
    pub seed: u64,
    pub trials_per_sample: usize,
    pub aggregation: Aggregation,
    /// Hash of the configuration that produced the report; set by callers.
    pub config_hash: String,
    pub summaries: Vec<KindSummary>,
    /// Samples excluded because they produced no frames.
    pub skipped: Vec<String>,
    pub records: Vec<SampleRecord>,
}

impl UedReport {
    pub fn summary(&self, kind: AugmentationKind) -> Option<&KindSummary> {
        self.summaries.iter().find(|s| s.augmentation == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
    }

    /// `augmentation,mean,stderr` with one row per family.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("augmentation,mean,stderr\n");
        for s in &self.summaries {
            let _ = writeln!(out, "{},{:.4},{:.4}", s.augmentation, s.value, s.stderr);
        }
        out
    }
}

/// Mean and standard error of the mean, both multiplied by 100.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    (100.0 * mean, 100.0 * stderr)
}

/// Evaluates every augmentation template of `augmentations` on every sample.
///
/// Parameters for (template, sample, trial) are drawn from a seed derived
/// from `options.seed`, so the report does not depend on thread scheduling.
pub fn ued_dataset(
    quantizer: &dyn Quantize,
    encoder: &dyn FrameEncoder,
    augmentations: &AugmentationSet,
    dataset: &[Utterance],
    options: &UedOptions,
) -> Result<UedReport> {
    if dataset.is_empty() {
        return Err(Error::Validation("evaluation dataset is empty".into()));
    }
    let trials = options.trials_per_sample.max(1);

    let clean: Vec<Option<Vec<u32>>> = dataset
        .par_iter()
        .map(|u| {
            if encoder.frame_count(u.signal.len()) == 0 {
                return Ok(None);
            }
            let units = quantizer.quantize(&encoder.encode(&u.signal)?)?;
            Ok(Some(dedup(units.units())))
        })
        .collect::<Result<_>>()?;
    let skipped: Vec<String> = dataset
        .iter()
        .zip(&clean)
        .filter(|(_, c)| c.is_none())
        .map(|(u, _)| u.id.clone())
        .collect();
    for id in &skipped {
        log::warn!("sample {id} has no frames; excluded from UED");
    }

    let mut summaries = Vec::new();
    let mut records = Vec::new();
    for (t_idx, template) in augmentations.templates().iter().enumerate() {
        let kind = template.kind();
        let tag = format!("ued/{t_idx}/{}", kind.name());
        let jobs: Vec<(usize, usize)> = (0..dataset.len())
            .filter(|i| clean[*i].is_some())
            .flat_map(|i| (0..trials).map(move |t| (i, t)))
            .collect();
        let measured: Vec<SampleRecord> = jobs
            .par_iter()
            .map(|&(i, trial)| {
                let mut rng = seeded_rng(derive_seed(options.seed, &tag, (i * trials + trial) as u64));
                let aug = template.sample(&mut rng);
                let clean_units = clean[i].as_deref().unwrap_or_default();
                let m = ued_against(quantizer, encoder, &aug, &dataset[i].signal, clean_units)?
                    .expect("non-empty samples only");
                Ok(SampleRecord {
                    sample_id: dataset[i].id.clone(),
                    augmentation: kind,
                    trial,
                    params: aug.describe(),
                    measurement: m,
                })
            })
            .collect::<Result<_>>()?;

        let per_sample: Vec<f64> = measured
            .chunks(trials)
            .map(|c| c.iter().map(|r| r.measurement.ratio).sum::<f64>() / c.len() as f64)
            .collect();
        summaries.push(summarize(kind, &per_sample, options.aggregation));
        records.extend(measured);
    }

    Ok(UedReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        quantizer_id: String::new(),
        dataset_id: String::new(),
        num_units: quantizer.num_units(),
        seed: options.seed,
        trials_per_sample: trials,
        aggregation: options.aggregation,
        config_hash: String::new(),
        summaries,
        skipped,
        records,
    })
}

/// Combines per-sample ratios for one family.
pub fn summarize(kind: AugmentationKind, per_sample: &[f64], aggregation: Aggregation) -> KindSummary {
    let (mean, stderr) = mean_and_stderr(per_sample);
    let value = match aggregation {
        Aggregation::Mean => mean,
        Aggregation::Sum => 100.0 * per_sample.iter().sum::<f64>(),
    };
    KindSummary {
        augmentation: kind,
        value,
        stderr,
        samples: per_sample.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::ConstantQuantizer;

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(levenshtein::<u32>(&[], &[4, 5, 6]), 3);
        assert_eq!(levenshtein(&[10, 11, 21], &[10, 21, 21]), 1);
        assert_eq!(levenshtein(&[1, 2], &[] as &[i32]), 2);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn hand_evaluated_ued() {
        assert_eq!(ued_from_units(&[1, 1, 2], &[1, 3, 3], 4), 0.25);
        assert_eq!(ued_from_units(&[5, 5, 5], &[5], 3), 0.0);
    }

    #[test]
    fn aggregation_arithmetic() {
        let s = summarize(AugmentationKind::Time, &[0.2, 0.4], Aggregation::Mean);
        assert!((s.value - 30.0).abs() < 1e-12);
        assert!((s.stderr - 10.0).abs() < 1e-12);
        let s = summarize(AugmentationKind::Time, &[0.2, 0.4], Aggregation::Sum);
        assert!((s.value - 60.0).abs() < 1e-12);
        assert_eq!(mean_and_stderr(&[0.3]), (30.0, 0.0));
    }

    #[test]
    fn empty_dataset_rejected() {
        let enc = crate::encoder::LogMelEncoder::new(Default::default()).unwrap();
        let q = ConstantQuantizer { num_units: 4 };
        let r = ued_dataset(&q, &enc, &AugmentationSet::identity(), &[], &UedOptions::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn frameless_samples_are_skipped() {
        let enc = crate::encoder::LogMelEncoder::new(Default::default()).unwrap();
        let q = ConstantQuantizer { num_units: 4 };
        let data = vec![
            Utterance::new("short", Signal::silence(100, 16000)),
            Utterance::new("ok", Signal::sine(300.0, 0.5, 4000, 16000)),
        ];
        let r = ued_dataset(&q, &enc, &AugmentationSet::identity(), &data, &UedOptions::default())
            .unwrap();
        assert_eq!(r.skipped, vec!["short".to_string()]);
        assert_eq!(r.records.len(), 1);
        assert!(ued_sample(&q, &enc, &Augmentation::Identity, &data[0].signal)
            .unwrap()
            .is_none());
    }

    #[test]
    fn csv_layout() {
        let report = UedReport {
            tool_version: "0".into(),
            quantizer_id: "q".into(),
            dataset_id: "d".into(),
            num_units: 2,
            seed: 1,
            trials_per_sample: 1,
            aggregation: Aggregation::Mean,
            config_hash: String::new(),
            summaries: vec![summarize(AugmentationKind::Noise, &[0.1, 0.3], Aggregation::Mean)],
            skipped: vec![],
            records: vec![],
        };
        assert_eq!(report.to_csv(), "augmentation,mean,stderr\nnoise,20.0000,10.0000\n");
        assert_eq!(UedReport::from_json(&report.to_json()).unwrap(), report);
    }
}

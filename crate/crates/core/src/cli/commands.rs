use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::corpus::gen_synth_corpus;
use super::manifest::{short_hash, DatasetManifest, Split, MANIFEST_FILE};
use crate::augment::AugmentationKind;
use crate::encoder::{write_features, FrameEncoder, FrameSequence, LogMelEncoder};
use crate::quantizer::{encode_quantizer, kmeans_fit, load_quantizer, KMeansFit, Quantizer};
use crate::robustness::{ued_dataset, UedOptions, UedReport};
use crate::signal::{derive_seed, read_wav, resample, seeded_rng, write_wav, Utterance, CANONICAL_SAMPLE_RATE};
use crate::training::{train_iterative, RoundSummary};
use crate::{Error, Result};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn file_stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Short content hash of a saved quantizer.
pub fn quantizer_id(q: &Quantizer) -> String {
    short_hash(&Sha256::digest(encode_quantizer(q)))
}

fn encoder_for(config: &ExperimentConfig) -> Result<LogMelEncoder> {
    LogMelEncoder::new(config.encoder.clone())
}

fn load_checked(path: &Path, encoder: &dyn FrameEncoder) -> Result<Quantizer> {
    let q = load_quantizer(path)?;
    if q.input_dim() != encoder.dim() {
        return Err(Error::Validation(format!(
            "{} expects {}-dimensional frames but the encoder produces {}",
            path.display(),
            q.input_dim(),
            encoder.dim()
        )));
    }
    Ok(q)
}

fn load_split(manifest: &Path, split: Split) -> Result<(DatasetManifest, Vec<Utterance>)> {
    let m = DatasetManifest::load(manifest)?;
    let utts = m.utterances(split)?;
    if utts.is_empty() {
        return Err(Error::Validation(format!("manifest has no {} utterances", split.name())));
    }
    Ok((m, utts))
}

/// Encodes every utterance and stacks the frames into one sequence.
pub fn pool_frames(encoder: &dyn FrameEncoder, utterances: &[Utterance]) -> Result<FrameSequence> {
    let parts: Vec<FrameSequence> = utterances
        .par_iter()
        .map(|u| encoder.encode(&u.signal))
        .collect::<Result<_>>()?;
    let frame_rate = parts.first().map_or(0.0, |p| p.frame_rate());
    let data: Vec<f64> = parts.iter().flat_map(|p| p.as_slice().iter().copied()).collect();
    FrameSequence::new(data, encoder.dim(), frame_rate)
}

/// Generates the synthetic corpus into `config.out_dir`.
pub fn cmd_gen_corpus(config: &ExperimentConfig) -> Result<DatasetManifest> {
    config.corpus.validate()?;
    gen_synth_corpus(&config.corpus, config.seed()?, &config.out_dir)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansReport {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_id: String,
    pub quantizer_id: String,
    pub units: usize,
    pub dim: usize,
    pub frames: usize,
    pub fit: KMeansFit,
}

pub fn kmeans_model_path(dir: &Path, units: usize) -> PathBuf {
    dir.join(format!("kmeans_k{units}.ruq"))
}

/// Fits k-means on the pooled train-split frames; writes the model and a
/// JSON report next to it.
pub fn cmd_train_kmeans(manifest: &Path, config: &ExperimentConfig) -> Result<KMeansReport> {
    config.validate()?;
    let seed = config.seed()?;
    let encoder = encoder_for(config)?;
    let (m, utts) = load_split(manifest, Split::Train)?;
    let frames = pool_frames(&encoder, &utts)?;
    let k = config.units;
    let mut rng = seeded_rng(derive_seed(seed, "kmeans", k as u64));
    let (q, fit) = kmeans_fit(&frames, k, &config.kmeans, &mut rng)?;
    let q = Quantizer::KMeans(q);

    ensure_dir(&config.out_dir)?;
    let model = kmeans_model_path(&config.out_dir, k);
    write_file(&model, encode_quantizer(&q))?;
    let report = KMeansReport {
        tool_version: TOOL_VERSION.into(),
        seed,
        config_hash: config.hash(),
        dataset_id: m.dataset_id.clone(),
        quantizer_id: quantizer_id(&q),
        units: k,
        dim: encoder.dim(),
        frames: frames.num_frames(),
        fit,
    };
    write_file(&model.with_extension("json"), to_json(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub file: String,
    pub quantizer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_id: String,
    pub teacher_id: String,
    pub augmentations: Vec<AugmentationKind>,
    pub rounds: Vec<RoundSummary>,
    pub checkpoints: Vec<Checkpoint>,
}

pub fn robust_model_path(dir: &Path, round: usize) -> PathBuf {
    dir.join(format!("robust_round{round}.ruq"))
}

/// Pseudo-label training for `config.rounds` rounds. Writes one checkpoint
/// per round, `train_log.jsonl` and `train_summary.json`.
pub fn cmd_train_robust(manifest: &Path, teacher: &Path, config: &ExperimentConfig) -> Result<TrainSummary> {
    config.validate()?;
    let encoder = encoder_for(config)?;
    let teacher_q = load_checked(teacher, &encoder)?;
    let (m, utts) = load_split(manifest, Split::Train)?;
    let augs = config.augment.set(&config.augmentations)?;
    let train = config.train_config()?;
    let (students, log) = train_iterative(&teacher_q, &encoder, &utts, &augs, &train, config.rounds)?;

    ensure_dir(&config.out_dir)?;
    let mut checkpoints = Vec::new();
    for (round, s) in students.into_iter().enumerate() {
        let q = Quantizer::Mlp(s);
        let path = robust_model_path(&config.out_dir, round + 1);
        write_file(&path, encode_quantizer(&q))?;
        checkpoints.push(Checkpoint {
            round: round + 1,
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            quantizer_id: quantizer_id(&q),
        });
    }
    write_file(&config.out_dir.join("train_log.jsonl"), log.to_json_lines())?;
    let summary = TrainSummary {
        tool_version: TOOL_VERSION.into(),
        seed: train.seed,
        config_hash: config.hash(),
        dataset_id: m.dataset_id,
        teacher_id: quantizer_id(&teacher_q),
        augmentations: config.augmentations.clone(),
        rounds: log.rounds,
        checkpoints,
    };
    write_file(&config.out_dir.join("train_summary.json"), to_json(&summary))?;
    Ok(summary)
}

/// UED of a quantizer on the evaluation split, one summary per selected
/// augmentation family. Writes `<model>.ued.json` and `<model>.ued.csv`.
pub fn cmd_eval_ued(manifest: &Path, quantizer: &Path, config: &ExperimentConfig) -> Result<UedReport> {
    let seed = config.seed()?;
    config.encoder.validate()?;
    let encoder = encoder_for(config)?;
    let q = load_checked(quantizer, &encoder)?;
    let (m, utts) = load_split(manifest, config.eval.split)?;
    let set = config.augment.set(&config.augmentations)?;
    let options = UedOptions {
        seed,
        trials_per_sample: config.eval.trials_per_sample,
        aggregation: config.eval.aggregation,
    };
    let mut report = ued_dataset(&q, &encoder, &set, &utts, &options)?;
    report.quantizer_id = quantizer_id(&q);
    report.dataset_id = m.dataset_id;
    report.config_hash = config.hash();

    ensure_dir(&config.out_dir)?;
    let base = config.out_dir.join(file_stem(quantizer));
    write_file(&base.with_extension("ued.json"), report.to_json() + "\n")?;
    write_file(&base.with_extension("ued.csv"), report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub augmentation: AugmentationKind,
    pub baseline: f64,
    pub candidate: f64,
    /// `(baseline - candidate) / baseline` in percent; absent when the baseline is 0.
    pub relative_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Candidate is strictly lower on every family.
    pub improves_on_all: bool,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("augmentation,baseline,candidate,relative_improvement_pct\n");
        for r in &self.rows {
            let rel = r.relative_improvement_pct.map_or(String::new(), |v| format!("{v:.2}"));
            let _ = writeln!(out, "{},{:.4},{:.4},{rel}", r.augmentation, r.baseline, r.candidate);
        }
        out
    }
}

/// Per-family relative improvement of `candidate` over `baseline`.
pub fn compare_reports(baseline: &UedReport, candidate: &UedReport) -> Result<Comparison> {
    if baseline.num_units != candidate.num_units {
        return Err(Error::Validation(format!(
            "reports use different unit counts ({} vs {})",
            baseline.num_units, candidate.num_units
        )));
    }
    let kinds = |r: &UedReport| r.summaries.iter().map(|s| s.augmentation).collect::<Vec<_>>();
    if kinds(baseline) != kinds(candidate) {
        return Err(Error::Validation("reports cover different augmentation sets".into()));
    }
    let rows: Vec<ComparisonRow> = baseline
        .summaries
        .iter()
        .zip(&candidate.summaries)
        .map(|(a, b)| ComparisonRow {
            augmentation: a.augmentation,
            baseline: a.value,
            candidate: b.value,
            relative_improvement_pct: (a.value != 0.0).then(|| 100.0 * (a.value - b.value) / a.value),
        })
        .collect();
    let improves_on_all = rows.iter().all(|r| r.candidate < r.baseline);
    Ok(Comparison { rows, improves_on_all })
}

pub fn cmd_compare(baseline: &Path, candidate: &Path) -> Result<Comparison> {
    let read = |p: &Path| -> Result<UedReport> {
        UedReport::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)
    };
    compare_reports(&read(baseline)?, &read(candidate)?)
}

fn load_input(path: &Path) -> Result<crate::signal::Signal> {
    resample(&read_wav(path)?, CANONICAL_SAMPLE_RATE)
}

/// Applies one random draw of each selected family to a WAV file. Returns
/// `(output path, parameter description)` pairs.
pub fn cmd_augment(input: &Path, config: &ExperimentConfig) -> Result<Vec<(PathBuf, String)>> {
    let seed = config.seed()?;
    let signal = load_input(input)?;
    ensure_dir(&config.out_dir)?;
    let stem = file_stem(input);
    config
        .augmentations
        .iter()
        .map(|&kind| {
            let spec = config.augment.spec(kind)?;
            let aug = spec.sample(&mut seeded_rng(derive_seed(seed, "augment", kind as u64)));
            let out = aug.apply(&signal)?;
            let path = config.out_dir.join(format!("{stem}.{}.wav", kind.name()));
            write_wav(&out, &path)?;
            Ok((path, aug.describe()))
        })
        .collect()
}

/// Writes the log-mel features of a WAV file as `<stem>.ruft`.
pub fn cmd_encode(input: &Path, config: &ExperimentConfig) -> Result<(PathBuf, FrameSequence)> {
    let encoder = encoder_for(config)?;
    let frames = encoder.encode(&load_input(input)?)?;
    ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(format!("{}.ruft", file_stem(input)));
    write_features(&frames, &path)?;
    Ok((path, frames))
}

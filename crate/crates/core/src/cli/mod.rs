//! Experiment plumbing used by the `robust-units` binary: dataset
//! manifests, the synthetic corpus, JSON configuration and one function per
//! command. Every command takes its randomness from the configured root seed
//! and writes reports that embed the seed, a configuration hash and the tool
//! version.

mod commands;
mod config;
mod corpus;
mod manifest;

pub use commands::{
    cmd_augment, cmd_compare, cmd_encode, cmd_eval_ued, cmd_gen_corpus, cmd_train_kmeans,
    cmd_train_robust, compare_reports, kmeans_model_path, manifest_path, pool_frames, quantizer_id,
    robust_model_path, Checkpoint, Comparison, ComparisonRow, KMeansReport, TrainSummary,
};
pub use config::{parse_aug_selection, AugmentConfig, EvalConfig, ExperimentConfig};
pub use corpus::{
    gen_synth_corpus, sample_inventory, synth_utterance, CorpusConfig, Phoneme, Segment,
    SynthUtterance,
};
pub use manifest::{DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};

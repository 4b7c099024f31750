//! Robustness analysis and training for discrete speech units.
//!
//! A discrete speech-unit pipeline encodes a waveform into frame features and
//! quantizes each frame into an integer unit. This crate measures how stable
//! those units are under signal transforms that leave the spoken content
//! intact (time stretch, pitch shift, reverberation, additive noise), and
//! trains more stable quantizers by CTC pseudo-labeling against a frozen
//! teacher.
//!
//! # Module guide
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`signal`] | Waveforms, WAV I/O, resampling, seeded randomness |
//! | [`augment`] | Phase-vocoder stretch, pitch shift, image-source reverb, noise mixing |
//! | [`encoder`] | Frame encoders: built-in log-mel and precomputed feature files |
//! | [`quantizer`] | Unit sequences, k-means and MLP quantizers, model files |
//! | [`ctc`] | CTC loss, analytic gradient and an exhaustive path oracle |
//! | [`robustness`] | Levenshtein distance, unit edit distance, dataset reports |
//! | [`training`] | Adam, pseudo-label training and iterative refinement |
//! | [`cli`] | Corpus generation, manifests and the command implementations |
//!
//! # Quick start
//!
//! ```rust
//! use robust_units::quantizer::dedup;
//! use robust_units::robustness::levenshtein;
//!
//! let clean = dedup(&[10, 11, 11, 11, 21, 32, 32, 32, 21]);
//! assert_eq!(clean, vec![10, 11, 21, 32, 21]);
//! assert_eq!(levenshtein(&clean, &[10, 11, 21, 21]), 1);
//! ```

pub mod augment;
pub mod cli;
pub mod ctc;
mod dsp;
pub mod encoder;
mod error;
pub mod quantizer;
pub mod robustness;
pub mod signal;
pub mod training;

pub use error::{Error, Result};

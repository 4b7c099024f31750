//! Pseudo-label training of robust MLP quantizers.
//!
//! A frozen teacher quantizer labels the clean version of every training
//! utterance; the deduplicated labels become CTC targets for a student MLP
//! that only ever sees augmented audio. Iterative training repeats this with
//! the converged student as the next teacher.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentationSet;
use crate::ctc::ctc_grad;
use crate::encoder::{FrameEncoder, FrameSequence};
use crate::quantizer::{dedup, MlpGrads, MlpQuantizer, Quantize};
use crate::signal::{derive_seed, seeded_rng, Utterance};
use crate::{Error, Result};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Global gradient-norm clip applied to every batch gradient.
    pub grad_clip: f64,
    /// Abort when more than this fraction of an epoch's samples cannot be aligned.
    pub max_infeasible_fraction: f64,
    /// Record per-epoch wall-clock time (makes logs non-reproducible).
    pub record_timing: bool,
    /// Fold per-dimension standardization of the clean training features
    /// into the first layer at initialization.
    pub standardize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
            grad_clip: 5.0,
            max_infeasible_fraction: 0.5,
            record_timing: false,
            standardize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Validation(
                "batch size, patience and max epochs must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Validation("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let shapes: Vec<usize> = shapes.into_iter().collect();
        Self {
            first: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            second: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_mlp(mlp: &MlpQuantizer) -> Self {
        Self::new(mlp.tensors().iter().map(|t| t.len()))
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Non-finite gradients abort the step before anything is modified.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Validation("parameter, gradient and state counts differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Validation(format!("shape mismatch in tensor {i}")));
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at tensor {i}, index {j} (step {})",
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Statistics for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub round: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Training samples whose target could not be aligned to their frames.
    pub infeasible: usize,
    pub skipped_batches: usize,
    pub improved: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

/// Outcome of one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    /// Description of the frozen teacher used for this round.
    pub teacher: String,
    pub seed: u64,
    pub initial_val_loss: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Training history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub rounds: Vec<RoundSummary>,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn epochs_of(&self, round: usize) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(move |e| e.round == round)
    }
}

struct Example<'a> {
    utterance: &'a Utterance,
    target: Vec<u32>,
    /// Per-dimension sum and sum of squares of the clean frames.
    moments: (Vec<f64>, Vec<f64>, usize),
}

fn moments(frames: &FrameSequence) -> (Vec<f64>, Vec<f64>, usize) {
    let mut sum = vec![0.0; frames.dim()];
    let mut sq = vec![0.0; frames.dim()];
    for f in frames.frames() {
        for (d, v) in f.iter().enumerate() {
            sum[d] += v;
            sq[d] += v * v;
        }
    }
    (sum, sq, frames.num_frames())
}

/// Rewrites the first layer so that it sees `(x - mean) / std` while still
/// taking raw features as input.
pub fn fold_standardization(mlp: &mut MlpQuantizer, mean: &[f64], std: &[f64]) {
    let mut tensors = mlp.tensors_mut();
    let (w, rest) = tensors.split_at_mut(1);
    let (w, b) = (&mut *w[0], &mut *rest[0]);
    let dim = mean.len();
    for (row, bias) in w.chunks_exact_mut(dim).zip(b.iter_mut()) {
        for d in 0..dim {
            row[d] /= std[d];
            *bias -= row[d] * mean[d];
        }
    }
}

enum Outcome {
    Ok(f64, MlpGrads),
    Infeasible,
}

fn sample_gradient(
    student: &MlpQuantizer,
    frames: &FrameSequence,
    target: &[u32],
) -> Result<Outcome> {
    let cache = student.forward_cached(frames)?;
    match ctc_grad(&cache.logits, target) {
        Ok((loss, g)) => Ok(Outcome::Ok(loss, student.backward(&cache, &g)?)),
        Err(Error::Infeasible { .. }) => Ok(Outcome::Infeasible),
        Err(e) => Err(e),
    }
}

/// Mean CTC loss over a fixed set of (features, target) pairs, skipping
/// unalignable ones.
fn mean_loss(student: &MlpQuantizer, set: &[(FrameSequence, Vec<u32>)]) -> Result<f64> {
    let losses: Vec<Option<f64>> = set
        .par_iter()
        .map(|(frames, target)| {
            let logits = student.forward(frames)?;
            match crate::ctc::ctc_loss(&logits, target) {
                Ok(l) => Ok(Some(l)),
                Err(Error::Infeasible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<f64> = losses.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Numerical("no alignable validation samples".into()));
    }
    Ok(ok.iter().sum::<f64>() / ok.len() as f64)
}

/// Trains one student quantizer against a frozen teacher.
///
/// Returns the checkpoint with the lowest validation loss.
pub fn train_robust(
    teacher: &dyn Quantize,
    encoder: &dyn FrameEncoder,
    dataset: &[Utterance],
    augmentations: &AugmentationSet,
    config: &TrainConfig,
) -> Result<(MlpQuantizer, TrainLog)> {
    let mut log = TrainLog {
        seed: config.seed,
        ..TrainLog::default()
    };
    let student = train_round(teacher, "teacher", encoder, dataset, augmentations, config, 0, config.seed, &mut log)?;
    Ok((student, log))
}

/// Runs `rounds` rounds of pseudo-label training; round `r + 1` uses the
/// best checkpoint of round `r` as its frozen teacher.
pub fn train_iterative(
    teacher: &dyn Quantize,
    encoder: &dyn FrameEncoder,
    dataset: &[Utterance],
    augmentations: &AugmentationSet,
    config: &TrainConfig,
    rounds: usize,
) -> Result<(Vec<MlpQuantizer>, TrainLog)> {
    if rounds == 0 {
        return Err(Error::Validation("need at least one round".into()));
    }
    let mut log = TrainLog {
        seed: config.seed,
        ..TrainLog::default()
    };
    let mut students: Vec<MlpQuantizer> = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let seed = if round == 0 {
            config.seed
        } else {
            derive_seed(config.seed, "round", round as u64)
        };
        let student = match students.last() {
            None => train_round(teacher, "teacher", encoder, dataset, augmentations, config, round, seed, &mut log)?,
            Some(prev) => {
                let best = log.rounds[round - 1].best_epoch;
                let desc = format!("round {} best checkpoint (epoch {best})", round - 1);
                train_round(prev, &desc, encoder, dataset, augmentations, config, round, seed, &mut log)?
            }
        };
        students.push(student);
    }
    Ok((students, log))
}

#[allow(clippy::too_many_arguments)]
fn train_round(
    teacher: &dyn Quantize,
    teacher_desc: &str,
    encoder: &dyn FrameEncoder,
    dataset: &[Utterance],
    augmentations: &AugmentationSet,
    config: &TrainConfig,
    round: usize,
    seed: u64,
    log: &mut TrainLog,
) -> Result<MlpQuantizer> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    let num_units = teacher.num_units();
    let dim = encoder.dim();

    // Teacher targets come from clean audio only, once.
    let examples: Vec<Example> = dataset
        .par_iter()
        .map(|u| {
            let frames = encoder.encode(&u.signal)?;
            let units = teacher.quantize(&frames)?;
            Ok(Example {
                utterance: u,
                target: dedup(units.units()),
                moments: moments(&frames),
            })
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seeded_rng(derive_seed(seed, "split", 0)));
    let n_val = if examples.len() < 2 {
        0
    } else {
        ((examples.len() as f64 * config.validation_fraction).round() as usize)
            .clamp(1, examples.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx: Vec<usize> = if val_idx.is_empty() {
        train_idx.to_vec()
    } else {
        val_idx.to_vec()
    };
    let train_idx = train_idx.to_vec();

    // Validation augmentations are drawn once so epochs are comparable.
    let val_set: Vec<(FrameSequence, Vec<u32>)> = val_idx
        .par_iter()
        .map(|&i| {
            let ex = &examples[i];
            let aug = augmentations.sample(&mut seeded_rng(derive_seed(seed, "val", i as u64)));
            let frames = encoder.encode(&aug.apply(&ex.utterance.signal)?)?;
            Ok((frames, ex.target.clone()))
        })
        .collect::<Result<_>>()?;

    let probe = &examples[train_idx[0]].utterance.signal;
    let probe_features = encoder.encode(probe)?;

    let mut student = MlpQuantizer::new(dim, num_units, &mut seeded_rng(derive_seed(seed, "init", 0)))?;
    if config.standardize_inputs {
        let (mut sum, mut sq, mut n) = (vec![0.0; dim], vec![0.0; dim], 0usize);
        for &i in &train_idx {
            let (s, q, c) = &examples[i].moments;
            for d in 0..dim {
                sum[d] += s[d];
                sq[d] += q[d];
            }
            n += c;
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        fold_standardization(&mut student, &mean, &std);
    }
    let mut adam = AdamState::for_mlp(&student);
    let initial_val_loss = mean_loss(&student, &val_set)?;
    let mut best = (student.clone(), initial_val_loss, 0usize);
    let mut bad_epochs = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut epoch_order = train_idx.clone();
        epoch_order.shuffle(&mut seeded_rng(derive_seed(seed, "order", epoch as u64)));

        // fresh augmentation for every sample every epoch
        let inputs: Vec<FrameSequence> = epoch_order
            .par_iter()
            .map(|&i| {
                let idx = (epoch * examples.len() + i) as u64;
                let aug = augmentations.sample(&mut seeded_rng(derive_seed(seed, "aug", idx)));
                encoder.encode(&aug.apply(&examples[i].utterance.signal)?)
            })
            .collect::<Result<_>>()?;

        let (mut loss_sum, mut loss_count, mut infeasible, mut skipped_batches) = (0.0, 0usize, 0, 0);
        for (batch_inputs, batch_idx) in inputs
            .chunks(config.batch_size)
            .zip(epoch_order.chunks(config.batch_size))
        {
            let outcomes: Vec<Outcome> = batch_inputs
                .par_iter()
                .zip(batch_idx.par_iter())
                .map(|(frames, &i)| sample_gradient(&student, frames, &examples[i].target))
                .collect::<Result<_>>()?;

            let mut total: Option<MlpGrads> = None;
            let mut count = 0usize;
            for o in &outcomes {
                match o {
                    Outcome::Ok(loss, g) => {
                        loss_sum += loss;
                        count += 1;
                        match total.as_mut() {
                            Some(t) => t.accumulate(g),
                            None => total = Some(g.clone()),
                        }
                    }
                    Outcome::Infeasible => infeasible += 1,
                }
            }
            loss_count += count;
            let Some(mut grads) = total else {
                skipped_batches += 1;
                log::warn!("round {round} epoch {epoch}: batch skipped, no alignable samples");
                continue;
            };
            grads.scale(1.0 / count as f64);
            let norm = grads.global_norm();
            if norm > config.grad_clip {
                grads.scale(config.grad_clip / norm);
            }
            let grad_refs = grads.tensors();
            let mut params = student.tensors_mut();
            adam_step(&mut params, &grad_refs, &mut adam, config.learning_rate)?;
        }

        if infeasible as f64 > config.max_infeasible_fraction * epoch_order.len() as f64 {
            return Err(Error::Numerical(format!(
                "round {round} epoch {epoch}: {infeasible} of {} samples could not be aligned to their targets",
                epoch_order.len()
            )));
        }
        if encoder.encode(probe)? != probe_features {
            return Err(Error::Numerical("encoder output changed during training".into()));
        }

        let val_loss = mean_loss(&student, &val_set)?;
        let improved = val_loss < best.1;
        if improved {
            best = (student.clone(), val_loss, epoch);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
        }
        let train_loss = if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            f64::NAN
        };
        log::info!(
            "round {round} epoch {epoch}: train {train_loss:.4} val {val_loss:.4}{}",
            if improved { " *" } else { "" }
        );
        log.epochs.push(EpochRecord {
            round,
            epoch,
            train_loss,
            val_loss,
            infeasible,
            skipped_batches,
            improved,
            wall_clock_secs: config.record_timing.then(|| started.elapsed().as_secs_f64()),
        });
        if bad_epochs >= config.patience {
            stopped_early = true;
            break;
        }
    }

    log.rounds.push(RoundSummary {
        round,
        teacher: teacher_desc.to_string(),
        seed,
        initial_val_loss,
        best_epoch: best.2,
        best_val_loss: best.1,
        stopped_early,
    });
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_standardization_matches_scaled_inputs() {
        let mut rng = seeded_rng(9);
        let plain = MlpQuantizer::new(3, 4, &mut rng).unwrap();
        let (mean, std) = (vec![1.0, -2.0, 0.5], vec![2.0, 0.5, 3.0]);
        let mut folded = plain.clone();
        fold_standardization(&mut folded, &mean, &std);
        let x = vec![0.3, 1.7, -4.0, 2.0, 0.0, 1.0];
        let z: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v - mean[i % 3]) / std[i % 3]).collect();
        let a = folded.forward(&FrameSequence::new(x, 3, 50.0).unwrap()).unwrap();
        let b = plain.forward(&FrameSequence::new(z, 3, 50.0).unwrap()).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![0.5, -1.0];
        let mut state = AdamState::new([2]);
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut state, 0.1).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = vec![0.0];
        let mut state = AdamState::new([1]);
        adam_step(&mut [&mut p], &[&[1.0]], &mut state, 0.1).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut p = vec![1.0, 2.0];
        let mut state = AdamState::new([2]);
        let err = adam_step(&mut [&mut p], &[&[0.1, f64::NAN]], &mut state, 0.1);
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![1.0, 2.0];
        let mut state = AdamState::new([2]);
        assert!(adam_step(&mut [&mut p], &[&[0.1]], &mut state, 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

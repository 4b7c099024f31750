//! Connectionist temporal classification loss.
//!
//! Logits are `T' x (K + 1)` with the blank at index `K`. The loss is the
//! negative log of the total probability of all frame-level paths that
//! collapse (merge repeats, then drop blanks) onto the target. It is computed
//! with the forward recursion over the blank-interleaved target in log space;
//! the gradient with respect to the logits comes from forward-backward
//! posteriors.

use crate::quantizer::Logits;
use crate::{Error, Result};

/// Stand-in for log(0); additions saturate at this value.
pub const LOG_ZERO: f64 = -1e30;

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi <= LOG_ZERO {
        LOG_ZERO
    } else if lo <= LOG_ZERO {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn log_mul(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO || b <= LOG_ZERO {
        LOG_ZERO
    } else {
        a + b
    }
}

/// Row-wise log-softmax of a `rows x classes` matrix.
pub fn log_softmax(data: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    out
}

/// Frames needed to emit `target`: one per label plus a blank between each
/// pair of equal neighbours.
pub fn min_frames(target: &[u32]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Collapses a frame-level path: merges repeats, then removes blanks.
pub fn collapse(path: &[u32], blank: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

struct Lattice {
    frames: usize,
    classes: usize,
    labels: Vec<usize>,
    log_probs: Vec<f64>,
}

impl Lattice {
    fn new(logits: &Logits, target: &[u32]) -> Result<Self> {
        let classes = logits.classes;
        if classes < 2 {
            return Err(Error::Validation("CTC needs at least one unit plus blank".into()));
        }
        let blank = classes - 1;
        if let Some(u) = target.iter().find(|u| **u as usize >= blank) {
            return Err(Error::Validation(format!(
                "target unit {u} collides with blank or exceeds {} units",
                blank
            )));
        }
        let frames = logits.num_frames();
        let required = min_frames(target);
        if required > frames {
            return Err(Error::Infeasible {
                target_len: target.len(),
                required,
                frames,
            });
        }
        let mut labels = Vec::with_capacity(2 * target.len() + 1);
        labels.push(blank);
        for &u in target {
            labels.push(u as usize);
            labels.push(blank);
        }
        Ok(Self {
            frames,
            classes,
            labels,
            log_probs: log_softmax(&logits.data, classes),
        })
    }

    fn emit(&self, t: usize, s: usize) -> f64 {
        self.log_probs[t * self.classes + self.labels[s]]
    }

    // a label may skip the preceding blank unless it repeats the label before it
    fn can_skip(&self, s: usize) -> bool {
        s >= 2 && self.labels[s] != self.classes - 1 && self.labels[s] != self.labels[s - 2]
    }

    fn forward(&self) -> Vec<f64> {
        let s_len = self.labels.len();
        let mut alpha = vec![LOG_ZERO; self.frames * s_len];
        alpha[0] = self.emit(0, 0);
        if s_len > 1 {
            alpha[1] = self.emit(0, 1);
        }
        for t in 1..self.frames {
            let (prev, cur) = alpha.split_at_mut(t * s_len);
            let prev = &prev[(t - 1) * s_len..];
            for s in 0..s_len {
                let mut acc = prev[s];
                if s >= 1 {
                    acc = log_add(acc, prev[s - 1]);
                }
                if self.can_skip(s) {
                    acc = log_add(acc, prev[s - 2]);
                }
                cur[s] = log_mul(acc, self.emit(t, s));
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let s_len = self.labels.len();
        let last = self.frames - 1;
        let mut beta = vec![LOG_ZERO; self.frames * s_len];
        beta[last * s_len + s_len - 1] = self.emit(last, s_len - 1);
        if s_len > 1 {
            beta[last * s_len + s_len - 2] = self.emit(last, s_len - 2);
        }
        for t in (0..last).rev() {
            let (cur, next) = beta.split_at_mut((t + 1) * s_len);
            let cur = &mut cur[t * s_len..];
            for s in 0..s_len {
                let mut acc = next[s];
                if s + 1 < s_len {
                    acc = log_add(acc, next[s + 1]);
                }
                if s + 2 < s_len && self.can_skip(s + 2) {
                    acc = log_add(acc, next[s + 2]);
                }
                cur[s] = log_mul(acc, self.emit(t, s));
            }
        }
        beta
    }

    fn log_likelihood(&self, alpha: &[f64]) -> f64 {
        let s_len = self.labels.len();
        let row = &alpha[(self.frames - 1) * s_len..];
        if s_len > 1 {
            log_add(row[s_len - 1], row[s_len - 2])
        } else {
            row[0]
        }
    }
}

fn empty_sequence_loss(logits: &Logits, target: &[u32]) -> Option<Result<f64>> {
    (logits.num_frames() == 0).then(|| {
        if target.is_empty() {
            Ok(0.0)
        } else {
            Err(Error::Infeasible {
                target_len: target.len(),
                required: min_frames(target),
                frames: 0,
            })
        }
    })
}

/// Negative log-likelihood of `target` under per-frame `logits`.
pub fn ctc_loss(logits: &Logits, target: &[u32]) -> Result<f64> {
    if let Some(r) = empty_sequence_loss(logits, target) {
        return r;
    }
    let lattice = Lattice::new(logits, target)?;
    let ll = lattice.log_likelihood(&lattice.forward());
    if ll <= LOG_ZERO {
        return Err(Error::Numerical("target has zero probability".into()));
    }
    Ok(-ll)
}

/// Loss and its gradient with respect to the logits (same layout as `logits`).
pub fn ctc_grad(logits: &Logits, target: &[u32]) -> Result<(f64, Vec<f64>)> {
    if let Some(r) = empty_sequence_loss(logits, target) {
        return r.map(|l| (l, Vec::new()));
    }
    let lattice = Lattice::new(logits, target)?;
    let alpha = lattice.forward();
    let beta = lattice.backward();
    let ll = lattice.log_likelihood(&alpha);
    if ll <= LOG_ZERO {
        return Err(Error::Numerical("target has zero probability".into()));
    }

    let (classes, s_len) = (lattice.classes, lattice.labels.len());
    let mut grad: Vec<f64> = lattice.log_probs.iter().map(|lp| lp.exp()).collect();
    for t in 0..lattice.frames {
        let row = &mut grad[t * classes..(t + 1) * classes];
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a <= LOG_ZERO || b <= LOG_ZERO {
                continue;
            }
            // alpha and beta both include the emission at t
            let occupancy = (a + b - lattice.emit(t, s) - ll).exp();
            row[lattice.labels[s]] -= occupancy;
        }
    }
    Ok((-ll, grad))
}

/// Largest number of paths [`ctc_brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Loss by explicit enumeration of every alignment path.
///
/// Returns `+inf` when no path collapses onto the target.
pub fn ctc_brute_force(logits: &Logits, target: &[u32]) -> Result<f64> {
    let (frames, classes) = (logits.num_frames(), logits.classes);
    let total = (classes as u64)
        .checked_pow(frames as u32)
        .filter(|n| *n <= BRUTE_FORCE_LIMIT)
        .ok_or_else(|| Error::TooLarge(format!("{classes}^{frames} paths")))?;
    let log_probs = log_softmax(&logits.data, classes);
    let blank = (classes - 1) as u32;

    let mut path = vec![0u32; frames];
    let mut log_total = LOG_ZERO;
    for _ in 0..total {
        if collapse(&path, blank) == target {
            let lp: f64 = path
                .iter()
                .enumerate()
                .map(|(t, &c)| log_probs[t * classes + c as usize])
                .sum();
            log_total = log_add(log_total, lp);
        }
        // odometer increment
        for p in path.iter_mut().rev() {
            *p += 1;
            if (*p as usize) < classes {
                break;
            }
            *p = 0;
        }
    }
    Ok(if log_total <= LOG_ZERO {
        f64::INFINITY
    } else {
        -log_total
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[&[f64]]) -> Logits {
        Logits {
            classes: rows[0].len(),
            data: rows.concat(),
        }
    }

    #[test]
    fn single_frame_single_label() {
        let l = logits(&[&[0.3, -1.0, 2.0]]);
        let lp = log_softmax(&l.data, 3);
        assert!((ctc_loss(&l, &[1]).unwrap() + lp[1]).abs() < 1e-12);
    }

    #[test]
    fn two_frames_three_paths() {
        let l = logits(&[&[0.5, 0.1, -0.3], &[-0.2, 0.9, 0.4]]);
        let p: Vec<f64> = log_softmax(&l.data, 3).iter().map(|v| v.exp()).collect();
        let (a, blank) = (0, 2);
        let expected =
            -(p[a] * p[3 + a] + p[a] * p[3 + blank] + p[blank] * p[3 + a]).ln();
        assert!((ctc_loss(&l, &[0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn repeated_label_needs_separator() {
        let l = logits(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            ctc_loss(&l, &[0, 0]),
            Err(Error::Infeasible { required: 3, frames: 2, .. })
        ));
        assert_eq!(min_frames(&[1, 1, 2, 2, 2]), 8);
    }

    #[test]
    fn uniform_counts() {
        // K = 1: classes {0, blank}; 4 equiprobable paths over two frames
        let l = logits(&[&[0.0, 0.0], &[0.0, 0.0]]);
        // paths collapsing to [0]: (0,0) (0,b) (b,0) -> 3/4
        assert!((ctc_brute_force(&l, &[0]).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((ctc_loss(&l, &[0]).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((ctc_brute_force(&l, &[]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((ctc_loss(&l, &[]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(ctc_brute_force(&l, &[0, 0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_frame_gradient_is_cross_entropy() {
        let l = logits(&[&[0.3, -1.0, 2.0, 0.7]]);
        let (_, g) = ctc_grad(&l, &[2]).unwrap();
        let p: Vec<f64> = log_softmax(&l.data, 4).iter().map(|v| v.exp()).collect();
        for k in 0..4 {
            let onehot = if k == 2 { 1.0 } else { 0.0 };
            assert!((g[k] - (p[k] - onehot)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_frames() {
        let l = Logits {
            data: vec![],
            classes: 3,
        };
        assert_eq!(ctc_loss(&l, &[]).unwrap(), 0.0);
        assert!(ctc_loss(&l, &[0]).is_err());
    }

    #[test]
    fn invalid_target_unit() {
        let l = logits(&[&[0.0, 0.0, 0.0]]);
        assert!(matches!(ctc_loss(&l, &[2]), Err(Error::Validation(_))));
    }

    #[test]
    fn brute_force_size_limit() {
        let l = Logits {
            data: vec![0.0; 5 * 9],
            classes: 5,
        };
        assert!(matches!(ctc_brute_force(&l, &[0]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn long_sequences_stay_finite() {
        // 400 frames with strongly peaked rows: probabilities far below 1e-30
        let classes = 6;
        let data: Vec<f64> = (0..400 * classes)
            .map(|i| if i % 7 == 0 { 40.0 } else { -40.0 })
            .collect();
        let l = Logits { data, classes };
        let target: Vec<u32> = (0..150).map(|i| (i % 5) as u32).collect();
        let (loss, grad) = ctc_grad(&l, &target).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[0, 0, 2, 0, 1, 1, 2, 2], 2), vec![0, 0, 1]);
        assert_eq!(collapse(&[2, 2], 2), Vec::<u32>::new());
    }
}

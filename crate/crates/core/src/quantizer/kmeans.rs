use std::collections::HashSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UnitSequence;
use crate::encoder::FrameSequence;
use crate::signal::Rng;
use crate::{Error, Result};

/// Lloyd iteration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once the largest centroid move is below this distance.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-4,
        }
    }
}

/// Nearest-centroid quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansQuantizer {
    centroids: Vec<f64>,
    k: usize,
    dim: usize,
}

/// Diagnostics from a k-means fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    /// Total squared distance after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded_clusters: usize,
}

impl KMeansQuantizer {
    pub fn from_centroids(centroids: Vec<f64>, k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 || centroids.len() != k * dim {
            return Err(Error::Validation(format!(
                "centroid buffer of {} values does not match K={k}, D={dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite centroid".into()));
        }
        let distinct: HashSet<Vec<u64>> = centroids
            .chunks_exact(dim)
            .map(|c| c.iter().map(|v| v.to_bits()).collect())
            .collect();
        if distinct.len() != k {
            return Err(Error::Validation("duplicate centroids".into()));
        }
        Ok(Self { centroids, k, dim })
    }

    pub fn num_units(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// Index of the closest centroid; ties go to the lowest index.
    pub fn nearest(&self, frame: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, frame)
    }

    /// Maps each frame to its nearest centroid (squared Euclidean distance).
    pub fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        if frames.dim() != self.dim {
            return Err(Error::Validation(format!(
                "frames have dimension {}, quantizer expects {}",
                frames.dim(),
                self.dim
            )));
        }
        let units = frames.frames().map(|f| self.nearest(f).0 as u32).collect();
        UnitSequence::new(units, self.k)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[f64], dim: usize, frame: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, frame);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Fits `k` centroids with k-means++ seeding followed by Lloyd iterations.
pub fn kmeans_fit(
    data: &FrameSequence,
    k: usize,
    config: &KMeansConfig,
    rng: &mut Rng,
) -> Result<(KMeansQuantizer, KMeansFit)> {
    if k == 0 {
        return Err(Error::Validation("K must be at least 1".into()));
    }
    let dim = data.dim();
    let points: Vec<&[f64]> = data.frames().collect();
    let distinct: HashSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::Validation(format!(
            "need at least {k} distinct frames for K={k}, found {}",
            distinct.len()
        )));
    }

    let mut centroids = plus_plus_init(&points, k, dim, rng);
    let mut fit = KMeansFit {
        inertia: Vec::new(),
        iterations: 0,
        converged: false,
        reseeded_clusters: 0,
    };

    for _ in 0..config.max_iters {
        let assignment: Vec<(usize, f64)> = points
            .par_iter()
            .map(|p| nearest(&centroids, dim, p))
            .collect();
        fit.inertia.push(assignment.iter().map(|a| a.1).sum());
        fit.iterations += 1;

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, (j, _)) in points.iter().zip(&assignment) {
            counts[*j] += 1;
            for (s, v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }

        let mut updated = centroids.clone();
        let mut taken: Vec<bool> = vec![false; points.len()];
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let n = counts[j] as f64;
            for (u, s) in updated[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..]) {
                *u = s / n;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            // move the empty cluster onto the point farthest from its centroid
            let far = assignment
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .fold((0, -1.0), |best, (i, a)| if a.1 > best.1 { (i, a.1) } else { best });
            taken[far.0] = true;
            updated[j * dim..(j + 1) * dim].copy_from_slice(points[far.0]);
            fit.reseeded_clusters += 1;
        }

        let shift = updated
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = updated;
        if shift < config.tol {
            fit.converged = true;
            break;
        }
    }

    separate_duplicates(&mut centroids, &points, dim);
    let q = KMeansQuantizer::from_centroids(centroids, k, dim)?;
    Ok((q, fit))
}

fn plus_plus_init(points: &[&[f64]], k: usize, dim: usize, rng: &mut Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut idx = d2.iter().rposition(|d| *d > 0.0).unwrap_or(0);
            for (i, d) in d2.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick];
        centroids.extend_from_slice(c);
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(sq_dist(p, c)));
    }
    centroids
}

// Lloyd never produces two identical centroids from distinct clusters, but
// identical ones can survive from seeding when many frames coincide. Replace
// any duplicate with an unused data point.
fn separate_duplicates(centroids: &mut [f64], points: &[&[f64]], dim: usize) {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let key = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut dupes = Vec::new();
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        if !seen.insert(key(c)) {
            dupes.push(j);
        }
    }
    let mut candidates = points.iter();
    for j in dupes {
        for p in candidates.by_ref() {
            if seen.insert(key(p)) {
                centroids[j * dim..(j + 1) * dim].copy_from_slice(p);
                break;
            }
        }
    }
}

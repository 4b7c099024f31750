use rand::Rng as _;

use super::UnitSequence;
use crate::encoder::FrameSequence;
use crate::signal::Rng;
use crate::{Error, Result};

/// Negative slope of the LeakyReLU between layers.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden sizes that step linearly from the input dimension towards the unit
/// count: `step = floor((D - K) / 3)`, `h1 = D - step`, `h2 = D - 2 step`,
/// both at least `K + 1`.
pub fn hidden_dims(input_dim: usize, num_units: usize) -> (usize, usize) {
    let (d, k) = (input_dim as i64, num_units as i64);
    let step = (d - k).div_euclid(3);
    let floor = k + 1;
    ((d - step).max(floor) as usize, (d - 2 * step).max(floor) as usize)
}

/// One affine layer, `out x in` weights stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization. Values are drawn as f32 so
    /// a fresh network survives an f32 round trip unchanged.
    pub fn random(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..bound) as f32 as f64;
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| draw()).collect(),
            bias: (0..outputs).map(|_| draw()).collect(),
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Three affine layers with LeakyReLU between them, emitting `K + 1` logits
/// per frame (the last one is the CTC blank).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQuantizer {
    layers: [Dense; 3],
    num_units: usize,
}

/// Per-frame logits, `T' x (K + 1)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub data: Vec<f64>,
    pub classes: usize,
}

impl Logits {
    pub fn num_frames(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.classes)
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: [Vec<f64>; 2],
    post: [Vec<f64>; 2],
    pub logits: Logits,
}

/// Gradients for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients; `None` for layers excluded from the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: [Option<DenseGrads>; 3],
}

impl MlpGrads {
    pub fn zeros_like(mlp: &MlpQuantizer) -> Self {
        MlpGrads {
            layers: mlp.layers.clone().map(|l| {
                Some(DenseGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
            }),
        }
    }

    /// Flattened views in parameter order (W1, b1, W2, b2, W3, b3).
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|g| [g.weights.as_mut_slice(), g.bias.as_mut_slice()])
            .collect()
    }

    /// Adds `other` into `self` (matching layer presence).
    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
                a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl MlpQuantizer {
    /// A randomly initialized quantizer with the default hidden sizes.
    pub fn new(input_dim: usize, num_units: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || num_units == 0 {
            return Err(Error::Validation("input dim and unit count must be positive".into()));
        }
        let (h1, h2) = hidden_dims(input_dim, num_units);
        Self::from_layers([
            Dense::random(input_dim, h1, rng),
            Dense::random(h1, h2, rng),
            Dense::random(h2, num_units + 1, rng),
        ])
    }

    pub fn from_layers(layers: [Dense; 3]) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Validation(format!("layer {i} has inconsistent shapes")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers[1].inputs != layers[0].outputs || layers[2].inputs != layers[1].outputs {
            return Err(Error::Validation("layer sizes do not chain".into()));
        }
        let outputs = layers[2].outputs;
        if outputs < 2 {
            return Err(Error::Validation("need at least one unit plus blank".into()));
        }
        Ok(Self {
            layers,
            num_units: outputs - 1,
        })
    }

    pub fn layers(&self) -> &[Dense; 3] {
        &self.layers
    }

    pub fn num_units(&self) -> usize {
        self.num_units
    }

    /// Index of the CTC blank output.
    pub fn blank(&self) -> usize {
        self.num_units
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.layers[0].outputs, self.layers[1].outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flattened parameter tensors (W1, b1, W2, b2, W3, b3).
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_dim(&self, frames: &FrameSequence) -> Result<()> {
        if frames.dim() != self.input_dim() {
            return Err(Error::Validation(format!(
                "frames have dimension {}, quantizer expects {}",
                frames.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for every frame.
    pub fn forward(&self, frames: &FrameSequence) -> Result<Logits> {
        Ok(self.forward_cached(frames)?.logits)
    }

    pub fn forward_cached(&self, frames: &FrameSequence) -> Result<ForwardCache> {
        self.check_dim(frames)?;
        let t = frames.num_frames();
        let [l1, l2, l3] = &self.layers;
        let mut pre1 = vec![0.0; t * l1.outputs];
        let mut pre2 = vec![0.0; t * l2.outputs];
        let mut out = vec![0.0; t * l3.outputs];
        let mut post1 = vec![0.0; t * l1.outputs];
        let mut post2 = vec![0.0; t * l2.outputs];
        for (i, x) in frames.frames().enumerate() {
            let z1 = &mut pre1[i * l1.outputs..(i + 1) * l1.outputs];
            l1.forward(x, z1);
            let a1 = &mut post1[i * l1.outputs..(i + 1) * l1.outputs];
            a1.iter_mut().zip(z1.iter()).for_each(|(a, z)| *a = leaky(*z));
            let z2 = &mut pre2[i * l2.outputs..(i + 1) * l2.outputs];
            l2.forward(a1, z2);
            let a2 = &mut post2[i * l2.outputs..(i + 1) * l2.outputs];
            a2.iter_mut().zip(z2.iter()).for_each(|(a, z)| *a = leaky(*z));
            l3.forward(a2, &mut out[i * l3.outputs..(i + 1) * l3.outputs]);
        }
        Ok(ForwardCache {
            input: frames.as_slice().to_vec(),
            pre: [pre1, pre2],
            post: [post1, post2],
            logits: Logits {
                data: out,
                classes: l3.outputs,
            },
        })
    }

    /// Reverse-mode gradients of all parameters given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache, logit_grads: &[f64]) -> Result<MlpGrads> {
        self.backward_layers(cache, logit_grads, [true; 3])
    }

    /// Like [`backward`](Self::backward) but only produces gradients for the
    /// layers flagged in `trainable`; frozen layers come back as `None`.
    pub fn backward_layers(
        &self,
        cache: &ForwardCache,
        logit_grads: &[f64],
        trainable: [bool; 3],
    ) -> Result<MlpGrads> {
        let [l1, l2, l3] = &self.layers;
        let t = cache.logits.num_frames();
        if logit_grads.len() != cache.logits.data.len() || cache.input.len() != t * l1.inputs {
            return Err(Error::Validation(format!(
                "logit gradient has {} values, expected {}",
                logit_grads.len(),
                cache.logits.data.len()
            )));
        }
        let mut grads = [
            DenseGrads {
                weights: vec![0.0; l1.weights.len()],
                bias: vec![0.0; l1.outputs],
            },
            DenseGrads {
                weights: vec![0.0; l2.weights.len()],
                bias: vec![0.0; l2.outputs],
            },
            DenseGrads {
                weights: vec![0.0; l3.weights.len()],
                bias: vec![0.0; l3.outputs],
            },
        ];
        let first_needed = trainable.iter().position(|t| *t).unwrap_or(3);
        let mut d_a2 = vec![0.0; l2.outputs];
        let mut d_z2 = vec![0.0; l2.outputs];
        let mut d_a1 = vec![0.0; l1.outputs];
        let mut d_z1 = vec![0.0; l1.outputs];

        for i in 0..t {
            let g3 = &logit_grads[i * l3.outputs..(i + 1) * l3.outputs];
            let a2 = &cache.post[1][i * l2.outputs..(i + 1) * l2.outputs];
            let z2 = &cache.pre[1][i * l2.outputs..(i + 1) * l2.outputs];
            let a1 = &cache.post[0][i * l1.outputs..(i + 1) * l1.outputs];
            let z1 = &cache.pre[0][i * l1.outputs..(i + 1) * l1.outputs];
            let x = &cache.input[i * l1.inputs..(i + 1) * l1.inputs];

            if trainable[2] {
                outer_accumulate(&mut grads[2], g3, a2);
            }
            if first_needed > 1 {
                continue;
            }
            back_through(l3, g3, &mut d_a2);
            d_z2.iter_mut()
                .zip(d_a2.iter().zip(z2))
                .for_each(|(d, (g, z))| *d = g * leaky_grad(*z));
            if trainable[1] {
                outer_accumulate(&mut grads[1], &d_z2, a1);
            }
            if first_needed > 0 {
                continue;
            }
            back_through(l2, &d_z2, &mut d_a1);
            d_z1.iter_mut()
                .zip(d_a1.iter().zip(z1))
                .for_each(|(d, (g, z))| *d = g * leaky_grad(*z));
            outer_accumulate(&mut grads[0], &d_z1, x);
        }

        let [g1, g2, g3] = grads;
        Ok(MlpGrads {
            layers: [
                trainable[0].then_some(g1),
                trainable[1].then_some(g2),
                trainable[2].then_some(g3),
            ],
        })
    }

    /// Per frame, the highest-scoring non-blank unit (ties to the lowest id).
    pub fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        let logits = self.forward(frames)?;
        let units = logits
            .rows()
            .map(|row| argmax(&row[..self.num_units]) as u32)
            .collect();
        UnitSequence::new(units, self.num_units)
    }

    /// Applies `update` to every parameter tensor alongside the matching gradient.
    pub fn apply_update(&mut self, grads: &MlpGrads, mut update: impl FnMut(usize, &mut [f64], &[f64])) {
        let mut idx = 0;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if let Some(g) = g {
                update(idx, &mut layer.weights, &g.weights);
                update(idx + 1, &mut layer.bias, &g.bias);
            }
            idx += 2;
        }
    }
}

fn outer_accumulate(g: &mut DenseGrads, delta: &[f64], input: &[f64]) {
    let n_in = input.len();
    for (o, d) in delta.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        g.bias[o] += d;
        for (w, x) in g.weights[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
            *w += d * x;
        }
    }
}

fn back_through(layer: &Dense, delta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(delta) {
        if *d == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += d * w;
        }
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

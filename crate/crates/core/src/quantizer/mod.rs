//! Discrete quantizers mapping frames to unit sequences.
//!
//! Two quantizers are provided: nearest-centroid k-means and a small MLP
//! trained with CTC (see [`crate::training`]). Both can be stored in a
//! single binary model file:
//!
//! ```text
//! offset  size  field
//! 0       4     magic b"RUQZ"
//! 4       4     version (u32 LE) = 1
//! 8       4     kind (u32 LE): 0 = k-means, 1 = MLP
//! 12      4     K, number of units (u32 LE)
//! 16      4     D, input dimension (u32 LE)
//! k-means:
//! 20      8*K*D centroids, row-major f64 LE
//! MLP:
//! 20      4     h1 (u32 LE)
//! 24      4     h2 (u32 LE)
//! 28      ...   W1 (h1 x D), b1, W2 (h2 x h1), b2, W3 ((K+1) x h2), b3 as f64 LE
//! ```
//!
//! Unit sequences are 0-based (`0..K`). Unit files hold one utterance per
//! line as whitespace-separated integers.

mod kmeans;
mod mlp;

use std::io::Write as _;
use std::path::Path;

pub use kmeans::{kmeans_fit, KMeansConfig, KMeansFit, KMeansQuantizer};
pub use mlp::{
    argmax, hidden_dims, Dense, DenseGrads, ForwardCache, Logits, MlpGrads, MlpQuantizer,
    LEAKY_SLOPE,
};

use crate::encoder::FrameSequence;
use crate::{Error, Result};

pub const QUANTIZER_MAGIC: [u8; 4] = *b"RUQZ";
pub const QUANTIZER_VERSION: u32 = 1;

/// Collapses runs of equal adjacent elements to a single occurrence.
pub fn dedup<T: PartialEq + Copy>(units: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(units.len());
    for &u in units {
        if out.last() != Some(&u) {
            out.push(u);
        }
    }
    out
}

/// Unit ids together with the vocabulary size they were drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnitSequence {
    units: Vec<u32>,
    vocab: usize,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>, vocab: usize) -> Result<Self> {
        if let Some(u) = units.iter().find(|u| **u as usize >= vocab) {
            return Err(Error::Validation(format!("unit {u} outside vocabulary of {vocab}")));
        }
        Ok(Self { units, vocab })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn dedup(&self) -> UnitSequence {
        UnitSequence {
            units: dedup(&self.units),
            vocab: self.vocab,
        }
    }
}

/// Anything that turns frames into units.
pub trait Quantize: Send + Sync {
    fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence>;
    fn num_units(&self) -> usize;
}

/// A stored quantizer of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Quantizer {
    KMeans(KMeansQuantizer),
    Mlp(MlpQuantizer),
}

impl Quantizer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Quantizer::KMeans(_) => "kmeans",
            Quantizer::Mlp(_) => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Quantizer::KMeans(q) => q.dim(),
            Quantizer::Mlp(q) => q.input_dim(),
        }
    }
}

impl Quantize for Quantizer {
    fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        match self {
            Quantizer::KMeans(q) => q.quantize(frames),
            Quantizer::Mlp(q) => q.quantize(frames),
        }
    }

    fn num_units(&self) -> usize {
        match self {
            Quantizer::KMeans(q) => q.num_units(),
            Quantizer::Mlp(q) => q.num_units(),
        }
    }
}

impl Quantize for KMeansQuantizer {
    fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        KMeansQuantizer::quantize(self, frames)
    }

    fn num_units(&self) -> usize {
        KMeansQuantizer::num_units(self)
    }
}

impl Quantize for MlpQuantizer {
    fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        MlpQuantizer::quantize(self, frames)
    }

    fn num_units(&self) -> usize {
        MlpQuantizer::num_units(self)
    }
}

/// Assigns every frame to unit 0 of a `K`-unit vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantQuantizer {
    pub num_units: usize,
}

impl Quantize for ConstantQuantizer {
    fn quantize(&self, frames: &FrameSequence) -> Result<UnitSequence> {
        UnitSequence::new(vec![0; frames.num_frames()], self.num_units.max(1))
    }

    fn num_units(&self) -> usize {
        self.num_units.max(1)
    }
}

pub fn encode_quantizer(q: &Quantizer) -> Vec<u8> {
    let mut out = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(&QUANTIZER_MAGIC);
    put_u32(&mut out, QUANTIZER_VERSION as usize);
    match q {
        Quantizer::KMeans(k) => {
            put_u32(&mut out, 0);
            put_u32(&mut out, k.num_units());
            put_u32(&mut out, k.dim());
            for v in k.centroids() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Quantizer::Mlp(m) => {
            put_u32(&mut out, 1);
            put_u32(&mut out, m.num_units());
            put_u32(&mut out, m.input_dim());
            let (h1, h2) = m.hidden();
            put_u32(&mut out, h1);
            put_u32(&mut out, h2);
            for t in m.tensors() {
                for v in t {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn decode_quantizer(bytes: &[u8]) -> Result<Quantizer> {
    let mut r = ByteReader { bytes, pos: 0 };
    if r.take(4)? != QUANTIZER_MAGIC {
        return Err(Error::Format("bad quantizer file magic".into()));
    }
    let version = r.u32()?;
    if version != QUANTIZER_VERSION {
        return Err(Error::Format(format!("unsupported quantizer version {version}")));
    }
    let kind = r.u32()?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let q = match kind {
        0 => {
            let c = r.f64s(k.checked_mul(d).ok_or_else(|| Error::Format("size overflow".into()))?)?;
            Quantizer::KMeans(
                KMeansQuantizer::from_centroids(c, k, d).map_err(|e| Error::Format(e.to_string()))?,
            )
        }
        1 => {
            let (h1, h2) = (r.u32()? as usize, r.u32()? as usize);
            let mut layer = |inputs: usize, outputs: usize| -> Result<Dense> {
                let weights = r.f64s(inputs * outputs)?;
                let bias = r.f64s(outputs)?;
                Ok(Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                })
            };
            let layers = [layer(d, h1)?, layer(h1, h2)?, layer(h2, k + 1)?];
            Quantizer::Mlp(MlpQuantizer::from_layers(layers).map_err(|e| Error::Format(e.to_string()))?)
        }
        other => return Err(Error::Format(format!("unknown quantizer kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(q)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated quantizer file at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_quantizer(q: &Quantizer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_quantizer(q)).map_err(|e| Error::io(path, e))
}

pub fn load_quantizer(path: impl AsRef<Path>) -> Result<Quantizer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_quantizer(&bytes)
}

/// Renders unit sequences one per line, whitespace-separated.
pub fn format_units<'a>(seqs: impl IntoIterator<Item = &'a [u32]>) -> String {
    let mut s = String::new();
    for seq in seqs {
        let line: Vec<String> = seq.iter().map(u32::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_units(text: &str) -> Result<Vec<Vec<u32>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>()
                        .map_err(|_| Error::Format(format!("line {}: bad unit `{tok}`", i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn write_unit_file<'a>(
    path: impl AsRef<Path>,
    seqs: impl IntoIterator<Item = &'a [u32]>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_units(seqs)).map_err(|e| Error::io(path, e))
}

pub fn read_unit_file(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_units(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn dedup_examples() {
        assert_eq!(dedup(&[10, 11, 11, 11, 21, 32, 32, 32, 21]), vec![10, 11, 21, 32, 21]);
        assert_eq!(dedup::<u32>(&[]), Vec::<u32>::new());
        assert_eq!(dedup(&[5, 5, 5, 5]), vec![5]);
    }

    proptest! {
        #[test]
        fn dedup_properties(v in proptest::collection::vec(0u32..4, 0..40)) {
            let d = dedup(&v);
            prop_assert_eq!(dedup(&d), d.clone());
            prop_assert!(d.len() <= v.len());
            prop_assert!(d.windows(2).all(|w| w[0] != w[1]));
        }

        #[test]
        fn unit_text_round_trip(seqs in proptest::collection::vec(
            proptest::collection::vec(0u32..500, 0..20), 0..6)) {
            let text = format_units(seqs.iter().map(Vec::as_slice));
            prop_assert_eq!(parse_units(&text).unwrap(), seqs);
        }
    }

    #[test]
    fn unit_sequence_bounds() {
        assert!(UnitSequence::new(vec![0, 4], 4).is_err());
        let s = UnitSequence::new(vec![3, 3, 1], 4).unwrap();
        assert_eq!(s.dedup().units(), &[3, 1]);
    }

    #[test]
    fn kmeans_file_round_trip() {
        let q = Quantizer::KMeans(
            KMeansQuantizer::from_centroids(vec![0.1, -3.5, 1e-300, 7.25, 2.0, 2.0], 3, 2).unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("km.bin");
        save_quantizer(&q, &path).unwrap();
        assert_eq!(load_quantizer(&path).unwrap(), q);
    }

    #[test]
    fn mlp_file_round_trip() {
        let mlp = MlpQuantizer::new(7, 5, &mut seeded_rng(2)).unwrap();
        let q = Quantizer::Mlp(mlp.clone());
        let back = decode_quantizer(&encode_quantizer(&q)).unwrap();
        let Quantizer::Mlp(back) = back else {
            panic!("kind changed")
        };
        let frames = FrameSequence::new((0..21).map(|i| i as f64 * 0.1).collect(), 7, 50.0).unwrap();
        assert_eq!(back.forward(&frames).unwrap(), mlp.forward(&frames).unwrap());
    }

    #[test]
    fn corrupted_files() {
        let q = Quantizer::KMeans(KMeansQuantizer::from_centroids(vec![1.0, 2.0], 2, 1).unwrap());
        let bytes = encode_quantizer(&q);
        let mut bad = bytes.clone();
        bad[1] = b'?';
        assert!(matches!(decode_quantizer(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_quantizer(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 2;
        assert!(matches!(decode_quantizer(&wrong_version), Err(Error::Format(_))));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode_quantizer(&trailing).is_err());
    }

    #[test]
    fn constant_quantizer_emits_zeros() {
        let frames = FrameSequence::new(vec![1.0; 6], 2, 50.0).unwrap();
        let q = ConstantQuantizer { num_units: 50 };
        assert_eq!(q.quantize(&frames).unwrap().units(), &[0, 0, 0]);
    }
}

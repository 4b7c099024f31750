//! Frame encoders: waveform to a sequence of continuous feature vectors.
//!
//! The built-in [`LogMelEncoder`] is deterministic and has no trainable
//! state. Features computed elsewhere (for example by a self-supervised
//! speech model) can be brought in through the binary feature file format
//! handled by [`read_features`] / [`write_features`]:
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"RUFT"
//! 4       4     version (u32 LE) = 1
//! 8       4     frame count T' (u32 LE)
//! 12      4     dimension D (u32 LE)
//! 16      4     frame rate in Hz (f32 LE)
//! 20      4*T'*D  frames, row-major f32 LE
//! ```

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::hann;
use crate::signal::{Signal, CANONICAL_SAMPLE_RATE};
use crate::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"RUFT";
pub const FEATURE_VERSION: u32 = 1;

/// A `T' x D` matrix of frame features, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    data: Vec<f64>,
    dim: usize,
    frame_rate: f64,
}

impl FrameSequence {
    pub fn new(data: Vec<f64>, dim: usize, frame_rate: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("frame dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite frame value".into()));
        }
        Ok(Self {
            data,
            dim,
            frame_rate,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_rate: f64) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("ragged frame rows".into()));
        }
        Self::new(rows.concat(), dim, frame_rate)
    }

    pub fn empty(dim: usize, frame_rate: f64) -> Self {
        Self {
            data: Vec::new(),
            dim,
            frame_rate,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Anything that maps a waveform to frame features.
pub trait FrameEncoder: Send + Sync {
    fn encode(&self, signal: &Signal) -> Result<FrameSequence>;
    /// Number of frames `encode` produces for a signal of `signal_len` samples.
    fn frame_count(&self, signal_len: usize) -> usize;
    fn dim(&self) -> usize;
}

/// Parameters of the log-mel encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_SAMPLE_RATE,
            window_ms: 25.0,
            hop_ms: 20.0,
            n_fft: 512,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl EncoderConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_samples() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.sample_rate == 0 || self.window_samples() == 0 || self.hop_samples() == 0 {
            return fail("window, hop and sample rate must be positive".into());
        }
        if self.hop_ms > self.window_ms {
            return fail(format!("hop {} ms exceeds window {} ms", self.hop_ms, self.window_ms));
        }
        if self.n_fft < self.window_samples() {
            return fail(format!("n_fft {} shorter than window", self.n_fft));
        }
        if self.n_mels == 0 {
            return fail("n_mels must be positive".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return fail(format!("need 0 <= fmin < fmax <= nyquist, got {}..{}", self.fmin, self.fmax));
        }
        if !(self.log_floor > 0.0) {
            return fail("log floor must be positive".into());
        }
        Ok(())
    }
}

/// Number of frames for a signal of `signal_len` samples:
/// `1 + floor((len - window) / hop)` once the signal covers one window.
pub fn frame_count(signal_len: usize, config: &EncoderConfig) -> usize {
    let (win, hop) = (config.window_samples(), config.hop_samples());
    if signal_len < win {
        0
    } else {
        1 + (signal_len - win) / hop
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-style mel filters, one row of `n_fft / 2 + 1` weights per band.
pub fn mel_filterbank(config: &EncoderConfig) -> Vec<Vec<f64>> {
    let n_bins = config.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.n_fft as f64;
    (0..config.n_mels)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                })
                .collect()
        })
        .collect()
}

/// Band edges `(lower, upper)` in Hz of every mel filter.
pub fn mel_band_edges(config: &EncoderConfig) -> Vec<(f64, f64)> {
    let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
    let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64);
    (0..config.n_mels).map(|m| (edge(m), edge(m + 2))).collect()
}

/// Log-mel spectrogram encoder: `log(mel(|STFT|^2) + floor)`.
#[derive(Clone)]
pub struct LogMelEncoder {
    config: EncoderConfig,
    window: Vec<f64>,
    // sparse filterbank: (first bin, weights)
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMelEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelEncoder").field("config", &self.config).finish()
    }
}

impl LogMelEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let filters = mel_filterbank(&config)
            .into_iter()
            .map(|row| {
                let first = row.iter().position(|w| *w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|w| *w > 0.0).map_or(first, |l| l + 1);
                (first, row[first..last.max(first)].to_vec())
            })
            .collect();
        Ok(Self {
            window: hann(config.window_samples()),
            fft: FftPlanner::new().plan_fft_forward(config.n_fft),
            filters,
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Mel-band energies (before the log) of every frame.
    pub fn mel_energies(&self, signal: &Signal) -> Result<Vec<Vec<f64>>> {
        if signal.sample_rate() != self.config.sample_rate {
            return Err(Error::Validation(format!(
                "encoder expects {} Hz input, got {} Hz",
                self.config.sample_rate,
                signal.sample_rate()
            )));
        }
        let n = frame_count(signal.len(), &self.config);
        let (win, hop, n_fft) = (
            self.config.window_samples(),
            self.config.hop_samples(),
            self.config.n_fft,
        );
        let x = signal.samples();
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < win {
                    Complex64::new(x[start + i] * self.window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            out.push(
                self.filters
                    .iter()
                    .map(|(first, w)| {
                        w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect(),
            );
        }
        Ok(out)
    }
}

impl FrameEncoder for LogMelEncoder {
    fn encode(&self, signal: &Signal) -> Result<FrameSequence> {
        let energies = self.mel_energies(signal)?;
        let floor = self.config.log_floor;
        let data = energies
            .into_iter()
            .flat_map(|row| row.into_iter().map(move |e| (e + floor).ln()))
            .collect();
        Ok(FrameSequence {
            data,
            dim: self.config.n_mels,
            frame_rate: self.config.frame_rate(),
        })
    }

    fn frame_count(&self, signal_len: usize) -> usize {
        frame_count(signal_len, &self.config)
    }

    fn dim(&self) -> usize {
        self.config.n_mels
    }
}

/// Writes frames in the binary feature format (values narrowed to f32).
pub fn write_features(frames: &FrameSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(20 + 4 * frames.data.len());
    bytes.extend_from_slice(&FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(frames.num_frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(frames.dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(frames.frame_rate as f32).to_le_bytes());
    for v in &frames.data {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary feature file.
pub fn read_features(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&bytes)
}

pub fn parse_features(bytes: &[u8]) -> Result<FrameSequence> {
    if bytes.len() < 20 {
        return Err(Error::Format("feature file shorter than its header".into()));
    }
    if bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format("bad feature file magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let (frames, dim) = (u32_at(8) as usize, u32_at(12) as usize);
    let frame_rate = f32::from_le_bytes(bytes[16..20].try_into().unwrap()) as f64;
    let expected = 20 + 4 * frames * dim;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "feature payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    if dim == 0 {
        return Err(Error::Format("zero feature dimension".into()));
    }
    let data = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FrameSequence::new(data, dim, frame_rate).map_err(|e| Error::Format(e.to_string()))
}

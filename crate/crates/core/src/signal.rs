//! Mono waveforms, WAV I/O, band-limited resampling and seeded randomness.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{kaiser, sinc};
use crate::{Error, Result};

/// Sample rate every ingested waveform is converted to.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Deterministic random stream used throughout the crate.
///
/// ChaCha8 produces the same stream on every platform for a given seed.
pub type Rng = ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from a root seed, a purpose tag and a stream index.
///
/// The tag is folded in with FNV-1a and the result mixed with splitmix64, so
/// `(root, tag, index)` triples map to well-separated streams.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(index))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// A sine tone of the given frequency and amplitude.
    pub fn sine(freq_hz: f64, amplitude: f64, len: usize, sample_rate: u32) -> Self {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
        Self {
            samples: (0..len).map(|i| amplitude * (w * i as f64).sin()).collect(),
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Replaces the samples, keeping the rate. Crate-internal transforms only
    /// produce finite values, so no re-validation happens here.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// A named waveform in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub signal: Signal,
}

impl Utterance {
    pub fn new(id: impl Into<String>, signal: Signal) -> Self {
        Self {
            id: id.into(),
            signal,
        }
    }
}

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// What happened while writing a WAV file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    /// Samples outside [-1, 1] that were hard-clipped.
    pub clipped: usize,
}

/// Reads a PCM16 or float32 WAV file, averaging channels down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(wav_error)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::Format("sample count is not a multiple of the channel count".into()));
    }

    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Signal::new(mono, spec.sample_rate)
}

/// Writes a 16-bit PCM WAV file.
pub fn write_wav(signal: &Signal, path: impl AsRef<Path>) -> Result<WriteReport> {
    write_wav_with(signal, path, WavEncoding::Pcm16)
}

/// Writes a WAV file with an explicit sample encoding. Samples outside
/// [-1, 1] are clipped and counted in the returned report.
pub fn write_wav_with(
    signal: &Signal,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<WriteReport> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer =
        hound::WavWriter::new(std::io::BufWriter::new(file), spec).map_err(wav_error)?;

    let mut report = WriteReport::default();
    for &s in &signal.samples {
        let c = if s > 1.0 || s < -1.0 {
            report.clipped += 1;
            s.clamp(-1.0, 1.0)
        } else {
            s
        };
        match encoding {
            WavEncoding::Pcm16 => {
                let q = (c * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q).map_err(wav_error)?;
            }
            WavEncoding::Float32 => writer.write_sample(c as f32).map_err(wav_error)?,
        }
    }
    writer.finalize().map_err(wav_error)?;
    if report.clipped > 0 {
        log::warn!(
            "{}: clipped {} samples outside [-1, 1]",
            path.display(),
            report.clipped
        );
    }
    Ok(report)
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Format(format!("truncated or unreadable WAV: {io}")),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::Unsupported => Error::Unsupported("WAV variant not supported".into()),
        other => Error::Format(other.to_string()),
    }
}

const RESAMPLE_HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel.
///
/// The output has `round(len * target_rate / sample_rate)` samples.
pub fn resample(signal: &Signal, target_rate: u32) -> Result<Signal> {
    if target_rate == 0 {
        return Err(Error::Validation("target rate must be positive".into()));
    }
    if target_rate == signal.sample_rate {
        return Ok(signal.clone());
    }
    let ratio = target_rate as f64 / signal.sample_rate as f64;
    let out_len = (signal.len() as f64 * ratio).round() as usize;
    let samples = resample_by_ratio(&signal.samples, ratio, out_len);
    Ok(Signal {
        samples,
        sample_rate: target_rate,
    })
}

/// Kernel samples per unit of input time in the interpolation table.
const KERNEL_PHASES: usize = 1024;

/// Resamples raw samples so that output index `n` reads input time `n / ratio`.
///
/// The windowed-sinc kernel is tabulated once per call and read with linear
/// interpolation.
pub(crate) fn resample_by_ratio(input: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let cutoff = ratio.min(1.0);
    let half = RESAMPLE_HALF_TAPS as f64;
    // table[i] = h(i / KERNEL_PHASES), h even, for 0 <= d <= half (+1 guard)
    let table: Vec<f64> = (0..=RESAMPLE_HALF_TAPS as usize * KERNEL_PHASES + 1)
        .map(|i| {
            let d = i as f64 / KERNEL_PHASES as f64;
            cutoff * sinc(cutoff * d) * kaiser(d / half, KAISER_BETA)
        })
        .collect();
    let kernel = |d: f64| {
        let x = d.abs() * KERNEL_PHASES as f64;
        let i = x as usize;
        let f = x - i as f64;
        table[i] + f * (table[i + 1] - table[i])
    };
    let n_in = input.len() as i64;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let center = t.floor() as i64;
            let lo = (center - RESAMPLE_HALF_TAPS + 1).max(0);
            let hi = (center + RESAMPLE_HALF_TAPS).min(n_in - 1);
            (lo..=hi).map(|k| input[k as usize] * kernel(t - k as f64)).sum()
        })
        .collect()
}

//! Phase-vocoder time stretching and resampling-based pitch shifting.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{hann, wrap_phase};
use crate::signal::{resample_by_ratio, Signal};
use crate::{Error, Result};

/// Analysis window length in samples.
pub const VOCODER_WINDOW: usize = 2048;
/// Analysis and synthesis hop in samples.
pub const VOCODER_HOP: usize = 512;

/// Changes the duration of `signal` by `1 / rate` without changing its pitch.
///
/// `rate > 1` speeds the signal up. The output has exactly
/// `round(len / rate)` samples. Signals shorter than one analysis window are
/// rejected.
pub fn time_stretch(signal: &Signal, rate: f64) -> Result<Signal> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Validation(format!("stretch rate must be positive, got {rate}")));
    }
    if signal.len() < VOCODER_WINDOW {
        return Err(Error::DegenerateInput(format!(
            "signal of {} samples is shorter than the {VOCODER_WINDOW}-sample analysis window",
            signal.len()
        )));
    }
    let out_len = (signal.len() as f64 / rate).round() as usize;
    let spectrum = stft(signal.samples());
    let stretched = stretch_frames(&spectrum, rate);
    let samples = istft(&stretched, out_len);
    Ok(signal.with_samples(samples))
}

/// Shifts the pitch by `semitones` while keeping the length.
///
/// The signal is first stretched to `2^(s/12)` times its length and then
/// resampled back to the original length, which scales every frequency by
/// `2^(s/12)`.
pub fn pitch_shift(signal: &Signal, semitones: i32) -> Result<Signal> {
    if semitones == 0 {
        // a unit-rate vocoder pass is not bit-exact identity; skip it
        return Ok(signal.clone());
    }
    let factor = 2f64.powf(semitones as f64 / 12.0);
    let stretched = time_stretch(signal, 1.0 / factor)?;
    let samples = resample_by_ratio(stretched.samples(), 1.0 / factor, signal.len());
    Ok(signal.with_samples(samples))
}

type Frames = Vec<Vec<Complex64>>;

fn stft(samples: &[f64]) -> Frames {
    let pad = VOCODER_WINDOW / 2;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(samples);
    padded.resize(padded.len() + pad, 0.0);
    let n_frames = 1 + (padded.len() - VOCODER_WINDOW) / VOCODER_HOP;
    padded.resize((n_frames - 1) * VOCODER_HOP + VOCODER_WINDOW, 0.0);

    let window = hann(VOCODER_WINDOW);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(VOCODER_WINDOW);
    let n_bins = VOCODER_WINDOW / 2 + 1;
    (0..n_frames)
        .map(|f| {
            let start = f * VOCODER_HOP;
            let mut buf: Vec<Complex64> = padded[start..start + VOCODER_WINDOW]
                .iter()
                .zip(&window)
                .map(|(x, w)| Complex64::new(x * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf.truncate(n_bins);
            buf
        })
        .collect()
}

fn stretch_frames(frames: &Frames, rate: f64) -> Frames {
    let n_bins = frames[0].len();
    let zero = vec![Complex64::new(0.0, 0.0); n_bins];
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * k as f64 * VOCODER_HOP as f64 / VOCODER_WINDOW as f64)
        .collect();
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();

    let mut out = Vec::new();
    let mut step = 0.0f64;
    while step < frames.len() as f64 {
        let left = step.floor() as usize;
        let alpha = step - left as f64;
        let a = &frames[left];
        let b = frames.get(left + 1).unwrap_or(&zero);
        let frame = (0..n_bins)
            .map(|k| {
                let mag = (1.0 - alpha) * a[k].norm() + alpha * b[k].norm();
                Complex64::from_polar(mag, phase[k])
            })
            .collect();
        out.push(frame);
        for k in 0..n_bins {
            let delta = wrap_phase(b[k].arg() - a[k].arg() - advance[k]);
            phase[k] += advance[k] + delta;
        }
        step += rate;
    }
    out
}

fn istft(frames: &Frames, out_len: usize) -> Vec<f64> {
    let pad = VOCODER_WINDOW / 2;
    let total = (frames.len() - 1) * VOCODER_HOP + VOCODER_WINDOW;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let window = hann(VOCODER_WINDOW);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(VOCODER_WINDOW);
    let scale = 1.0 / VOCODER_WINDOW as f64;

    for (f, half) in frames.iter().enumerate() {
        let mut buf = vec![Complex64::new(0.0, 0.0); VOCODER_WINDOW];
        buf[..half.len()].copy_from_slice(half);
        for k in 1..VOCODER_WINDOW / 2 {
            buf[VOCODER_WINDOW - k] = half[k].conj();
        }
        ifft.process(&mut buf);
        let start = f * VOCODER_HOP;
        for i in 0..VOCODER_WINDOW {
            acc[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    (0..out_len)
        .map(|n| {
            let i = n + pad;
            match (acc.get(i), norm.get(i)) {
                (Some(&v), Some(&w)) if w > 1e-8 => v / w,
                _ => 0.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_signal_is_degenerate() {
        let s = Signal::silence(VOCODER_WINDOW - 1, 16000);
        assert!(matches!(time_stretch(&s, 1.1), Err(Error::DegenerateInput(_))));
        assert!(time_stretch(&Signal::silence(5000, 16000), 0.0).is_err());
    }

    #[test]
    fn unit_rate_reconstructs_interior() {
        let s = Signal::sine(440.0, 0.5, 16000, 16000);
        let out = time_stretch(&s, 1.0).unwrap();
        assert_eq!(out.len(), s.len());
        let err = s.samples()[2048..14000]
            .iter()
            .zip(&out.samples()[2048..14000])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "max interior error {err}");
    }

    #[test]
    fn stretch_lengths() {
        let s = Signal::sine(300.0, 0.5, 48000, 16000);
        assert_eq!(time_stretch(&s, 1.2).unwrap().len(), 40000);
        assert_eq!(time_stretch(&s, 0.8).unwrap().len(), 60000);
    }

    #[test]
    fn zero_semitones_is_identity() {
        let s = Signal::sine(440.0, 0.5, 8000, 16000);
        assert_eq!(pitch_shift(&s, 0).unwrap(), s);
        assert_eq!(pitch_shift(&s, 3).unwrap().len(), s.len());
    }
}

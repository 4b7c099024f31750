//! Shoebox room impulse responses via the image-source method.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_convolve, peak_abs, sinc};
use crate::signal::{Rng, Signal};
use crate::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Half-width of the fractional-delay interpolator (81 taps in total).
const DELAY_HALF_TAPS: i64 = 40;

/// Geometry and wall behaviour of a rectangular room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    /// Room extent along x, y, z in meters.
    pub dims: [f64; 3],
    pub source: [f64; 3],
    pub mic: [f64; 3],
    /// Wall absorption in (0, 1]; every reflection scales amplitude by `1 - absorption`.
    pub absorption: f64,
    pub max_order: u32,
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Validation(format!("room dims must be positive: {:?}", self.dims)));
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::Validation(format!(
                "absorption must lie in (0, 1], got {}",
                self.absorption
            )));
        }
        for (name, p) in [("source", &self.source), ("mic", &self.mic)] {
            let inside = p
                .iter()
                .zip(&self.dims)
                .all(|(c, d)| c.is_finite() && *c > 0.0 && c < d);
            if !inside {
                return Err(Error::Validation(format!(
                    "{name} {p:?} is not strictly inside room {:?}",
                    self.dims
                )));
            }
        }
        Ok(())
    }

    pub fn direct_distance(&self) -> f64 {
        distance(&self.source, &self.mic)
    }

    /// Every image source up to `max_order` reflections.
    pub fn image_sources(&self) -> Vec<ImageSource> {
        let n = self.max_order as i64;
        let mut axis_images: [Vec<(f64, u32)>; 3] = Default::default();
        for axis in 0..3 {
            let (s, l) = (self.source[axis], self.dims[axis]);
            for m in -n..=n {
                for mirrored in [false, true] {
                    let (pos, reflections) = if mirrored {
                        (-s + 2.0 * m as f64 * l, ((m - 1).abs() + m.abs()) as u32)
                    } else {
                        (s + 2.0 * m as f64 * l, (2 * m.abs()) as u32)
                    };
                    if reflections <= self.max_order {
                        axis_images[axis].push((pos, reflections));
                    }
                }
            }
        }

        let mut images = Vec::new();
        for &(x, rx) in &axis_images[0] {
            for &(y, ry) in &axis_images[1] {
                for &(z, rz) in &axis_images[2] {
                    let order = rx + ry + rz;
                    if order <= self.max_order {
                        images.push(ImageSource {
                            position: [x, y, z],
                            reflections: order,
                        });
                    }
                }
            }
        }
        images
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub reflections: u32,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Simulates the impulse response from `config.source` to `config.mic`.
///
/// Each image source contributes an impulse delayed by `d / c` with amplitude
/// `(1 - absorption)^reflections / (4 pi d)`, placed with an 81-tap
/// Hann-windowed sinc so that fractional delays are not rounded.
pub fn simulate_rir(config: &RoomConfig, sample_rate: u32) -> Result<Signal> {
    config.validate()?;
    let fs = sample_rate as f64;
    let reflect = 1.0 - config.absorption;

    let taps: Vec<(f64, f64)> = config
        .image_sources()
        .into_iter()
        .filter_map(|img| {
            let gain = if img.reflections == 0 {
                1.0
            } else {
                reflect.powi(img.reflections as i32)
            };
            if gain == 0.0 {
                return None;
            }
            let d = distance(&img.position, &config.mic);
            Some((d / SPEED_OF_SOUND * fs, gain / (4.0 * PI * d)))
        })
        .collect();

    let max_delay = taps.iter().fold(0.0f64, |m, t| m.max(t.0));
    let len = max_delay.ceil() as usize + DELAY_HALF_TAPS as usize + 1;
    let mut h = vec![0.0; len];
    for (delay, gain) in taps {
        let center = delay.round() as i64;
        for k in (center - DELAY_HALF_TAPS)..=(center + DELAY_HALF_TAPS) {
            if k < 0 || k as usize >= len {
                continue;
            }
            let offset = k as f64 - delay;
            let window = 0.5 * (1.0 + (PI * offset / (DELAY_HALF_TAPS as f64 + 1.0)).cos());
            h[k as usize] += gain * sinc(offset) * window;
        }
    }
    Signal::new(h, sample_rate)
}

/// Convolves `signal` with `rir` (full linear convolution, length
/// `len(x) + len(h) - 1`) and rescales the result to the input's peak.
pub fn reverberate(signal: &Signal, rir: &Signal) -> Result<Signal> {
    if signal.is_empty() || rir.is_empty() {
        return Err(Error::Validation("reverberation needs non-empty signal and RIR".into()));
    }
    let mut out = fft_convolve(signal.samples(), rir.samples());
    let (p_in, p_out) = (peak_abs(signal.samples()), peak_abs(&out));
    if p_out > 0.0 {
        let g = p_in / p_out;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Ok(signal.with_samples(out))
}

/// Ranges from which random rooms are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSampler {
    pub width: (f64, f64),
    pub depth: (f64, f64),
    pub height: (f64, f64),
    pub absorption: (f64, f64),
    pub max_order: u32,
    /// Minimum distance from any wall for source and mic.
    pub wall_margin: f64,
}

impl Default for RoomSampler {
    fn default() -> Self {
        Self {
            width: (3.0, 10.0),
            depth: (3.0, 10.0),
            height: (2.5, 4.0),
            absorption: (0.2, 0.8),
            max_order: 6,
            wall_margin: 0.5,
        }
    }
}

impl RoomSampler {
    pub fn sample(&self, rng: &mut Rng) -> RoomConfig {
        let dims = [
            rng.gen_range(self.width.0..=self.width.1),
            rng.gen_range(self.depth.0..=self.depth.1),
            rng.gen_range(self.height.0..=self.height.1),
        ];
        let point = |rng: &mut Rng| {
            let mut p = [0.0; 3];
            for (c, d) in p.iter_mut().zip(&dims) {
                let margin = self.wall_margin.min(d * 0.25);
                *c = rng.gen_range(margin..=d - margin);
            }
            p
        };
        let source = point(rng);
        let mic = point(rng);
        RoomConfig {
            dims,
            source,
            mic,
            absorption: rng.gen_range(self.absorption.0..=self.absorption.1),
            max_order: self.max_order,
        }
    }
}

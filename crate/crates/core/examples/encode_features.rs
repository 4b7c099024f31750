//! Log-mel features and the binary feature file.

use robust_units::encoder::{frame_count, read_features, write_features, EncoderConfig, FrameEncoder, LogMelEncoder};
use robust_units::signal::Signal;

fn main() -> robust_units::Result<()> {
    let config = EncoderConfig::default();
    let encoder = LogMelEncoder::new(config.clone())?;
    let tone = Signal::sine(1000.0, 0.5, 16000, 16000);
    let frames = encoder.encode(&tone)?;
    println!(
        "{} samples -> {} frames x {} mels at {} frames/s (expected {})",
        tone.len(),
        frames.num_frames(),
        frames.dim(),
        frames.frame_rate(),
        frame_count(tone.len(), &config)
    );
    let loudest = frames
        .frame(10)
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    println!("loudest band for a 1 kHz tone: {loudest}");

    let path = std::env::temp_dir().join("tone.ruft");
    write_features(&frames, &path)?;
    let back = read_features(&path)?;
    // the file stores f32
    let err = back
        .as_slice()
        .iter()
        .zip(frames.as_slice())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    println!("round trip through {}: max relative error {err:.1e}", path.display());
    Ok(())
}

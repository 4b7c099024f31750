//! Applies one random draw of every augmentation family to a synthetic
//! utterance and writes the results as WAV files.
//!
//! cargo run --example augmentations -- [OUT_DIR]

use std::path::PathBuf;

use robust_units::augment::{AugmentationKind, AugmentationSpec};
use robust_units::cli::{sample_inventory, synth_utterance};
use robust_units::signal::{seeded_rng, write_wav};

fn main() -> robust_units::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("augmentations"), PathBuf::from);
    std::fs::create_dir_all(&out).ok();
    let mut rng = seeded_rng(7);
    let inventory = sample_inventory(12, &mut rng);
    let utt = synth_utterance(&inventory, 3.0, 16000, &mut rng)?;
    write_wav(&utt.signal, out.join("clean.wav"))?;
    println!("clean: {} samples, {} segments", utt.signal.len(), utt.segments.len());

    for kind in AugmentationKind::FOUR {
        let aug = AugmentationSpec::default_for(kind).sample(&mut rng);
        let y = aug.apply(&utt.signal)?;
        let path = out.join(format!("{}.wav", kind.name()));
        write_wav(&y, &path)?;
        println!("{:<7} {:<40} {} samples -> {}", kind.name(), aug.describe(), y.len(), path.display());
    }
    Ok(())
}

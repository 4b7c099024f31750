//! Unit edit distance on hand-made unit sequences, plus the constant
//! quantizer that trivially scores zero.

use robust_units::augment::{AugmentationSet, AugmentationSpec};
use robust_units::encoder::LogMelEncoder;
use robust_units::quantizer::{dedup, ConstantQuantizer};
use robust_units::robustness::{levenshtein, ued_dataset, ued_from_units, UedOptions};
use robust_units::signal::{Signal, Utterance};

fn main() -> robust_units::Result<()> {
    let clean = [3, 3, 3, 7, 7, 1, 1, 1, 1, 9];
    let augmented = [3, 3, 7, 2, 2, 1, 9, 9];
    println!("clean     {:?} -> {:?}", clean, dedup(&clean));
    println!("augmented {:?} -> {:?}", augmented, dedup(&augmented));
    println!("levenshtein = {}", levenshtein(&dedup(&clean), &dedup(&augmented)));
    println!("UED x100    = {:.2}", 100.0 * ued_from_units(&clean, &augmented, clean.len()));

    // A quantizer that always emits the same unit never changes under
    // augmentation, which is why UED alone cannot rank quantizers.
    let encoder = LogMelEncoder::new(Default::default())?;
    let data: Vec<Utterance> = (0..4)
        .map(|i| Utterance::new(format!("tone{i}"), Signal::sine(150.0 + 60.0 * i as f64, 0.4, 32000, 16000)))
        .collect();
    let set = AugmentationSet::new(vec![AugmentationSpec::time_stretch(), AugmentationSpec::reverb()])?;
    let report = ued_dataset(&ConstantQuantizer { num_units: 50 }, &encoder, &set, &data, &UedOptions::default())?;
    print!("constant quantizer:\n{}", report.to_csv());
    Ok(())
}

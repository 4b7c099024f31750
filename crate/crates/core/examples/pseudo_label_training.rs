//! Pseudo-label training: a k-means teacher labels clean audio, an MLP
//! student learns to reproduce those labels from augmented audio with CTC,
//! and a second round uses the student as the new teacher.
//!
//! Small and short so it runs in a minute or two; see the `train-robust`
//! command for full-size runs.

use robust_units::augment::AugmentationSet;
use robust_units::cli::{compare_reports, pool_frames, sample_inventory, synth_utterance};
use robust_units::encoder::{FrameEncoder, LogMelEncoder};
use robust_units::quantizer::{dedup, kmeans_fit, KMeansConfig, Quantize};
use robust_units::robustness::{ued_dataset, UedOptions};
use robust_units::signal::{seeded_rng, Utterance};
use robust_units::training::{train_iterative, TrainConfig};

fn main() -> robust_units::Result<()> {
    let mut rng = seeded_rng(4);
    let inventory = sample_inventory(12, &mut rng);
    let mut make = |n: usize, tag: &str| -> robust_units::Result<Vec<Utterance>> {
        (0..n)
            .map(|i| Ok(Utterance::new(format!("{tag}-{i}"), synth_utterance(&inventory, 2.0, 16000, &mut rng)?.signal)))
            .collect()
    };
    let train = make(80, "train")?;
    let dev = make(20, "dev")?;

    let encoder = LogMelEncoder::new(Default::default())?;
    let (teacher, _) = kmeans_fit(&pool_frames(&encoder, &train)?, 20, &KMeansConfig::default(), &mut seeded_rng(1))?;
    let augs = AugmentationSet::all_four();
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 6,
        seed: 9,
        ..TrainConfig::default()
    };
    let (students, log) = train_iterative(&teacher, &encoder, &train, &augs, &config, 2)?;
    for e in &log.epochs {
        println!("round {} epoch {:>2}: train {:8.3}  val {:8.3}", e.round, e.epoch, e.train_loss, e.val_loss);
    }
    for r in &log.rounds {
        println!("round {} teacher: {}", r.round, r.teacher);
    }

    // A low UED only means something if the quantizer still emits units.
    let units_per_utt = |q: &dyn Quantize| -> robust_units::Result<f64> {
        let mut total = 0;
        for u in &dev {
            total += dedup(q.quantize(&encoder.encode(&u.signal)?)?.units()).len();
        }
        Ok(total as f64 / dev.len() as f64)
    };
    println!("k-means: {:.1} units per clean utterance", units_per_utt(&teacher)?);

    let options = UedOptions { seed: 2, ..Default::default() };
    let baseline = ued_dataset(&teacher, &encoder, &augs, &dev, &options)?;
    for (i, s) in students.iter().enumerate() {
        let report = ued_dataset(s, &encoder, &augs, &dev, &options)?;
        println!(
            "round {} ({:.1} units per clean utterance) vs k-means:\n{}",
            i + 1,
            units_per_utt(s)?,
            compare_reports(&baseline, &report)?.to_csv()
        );
    }
    Ok(())
}

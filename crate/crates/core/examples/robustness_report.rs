//! Dataset-level UED report for a k-means quantizer, written as JSON and CSV.

use robust_units::augment::AugmentationSet;
use robust_units::cli::{pool_frames, sample_inventory, synth_utterance};
use robust_units::encoder::LogMelEncoder;
use robust_units::quantizer::{kmeans_fit, KMeansConfig};
use robust_units::robustness::{ued_dataset, UedOptions};
use robust_units::signal::{seeded_rng, Utterance};

fn main() -> robust_units::Result<()> {
    let mut rng = seeded_rng(21);
    let inventory = sample_inventory(12, &mut rng);
    let mut make = |n: usize, tag: &str| -> robust_units::Result<Vec<Utterance>> {
        (0..n)
            .map(|i| Ok(Utterance::new(format!("{tag}-{i}"), synth_utterance(&inventory, 2.5, 16000, &mut rng)?.signal)))
            .collect()
    };
    let train = make(30, "train")?;
    let dev = make(10, "dev")?;

    let encoder = LogMelEncoder::new(Default::default())?;
    let frames = pool_frames(&encoder, &train)?;
    let mut report_csv = String::new();
    for k in [10, 20, 50] {
        let (km, _) = kmeans_fit(&frames, k, &KMeansConfig::default(), &mut seeded_rng(k as u64))?;
        let report = ued_dataset(&km, &encoder, &AugmentationSet::all_four(), &dev, &UedOptions { seed: 1, ..Default::default() })?;
        report_csv = report.to_csv();
        let row: Vec<String> = report.summaries.iter().map(|s| format!("{} {:5.2}±{:.2}", s.augmentation, s.value, s.stderr)).collect();
        println!("K={k:<3} {}", row.join("  "));
        std::fs::write(std::env::temp_dir().join(format!("ued_k{k}.json")), report.to_json()).ok();
    }
    print!("last report as CSV:\n{report_csv}");
    Ok(())
}

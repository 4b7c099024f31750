//! Fits a k-means quantizer on synthetic speech and turns utterances into
//! unit sequences.

use robust_units::cli::{sample_inventory, synth_utterance};
use robust_units::encoder::{FrameEncoder, FrameSequence, LogMelEncoder};
use robust_units::quantizer::{
    dedup, format_units, kmeans_fit, load_quantizer, save_quantizer, KMeansConfig, Quantize, Quantizer,
};
use robust_units::signal::seeded_rng;

fn main() -> robust_units::Result<()> {
    let mut rng = seeded_rng(11);
    let inventory = sample_inventory(10, &mut rng);
    let encoder = LogMelEncoder::new(Default::default())?;
    let mut pooled = Vec::new();
    let mut utterances = Vec::new();
    for _ in 0..20 {
        let u = synth_utterance(&inventory, 2.0, 16000, &mut rng)?;
        pooled.extend_from_slice(encoder.encode(&u.signal)?.as_slice());
        utterances.push(u);
    }
    let frames = FrameSequence::new(pooled, encoder.dim(), 50.0)?;
    let (km, fit) = kmeans_fit(&frames, 20, &KMeansConfig::default(), &mut rng)?;
    println!(
        "{} frames, K=20: {} iterations, inertia {:.1} -> {:.1}",
        frames.num_frames(),
        fit.iterations,
        fit.inertia[0],
        fit.inertia[fit.inertia.len() - 1]
    );

    let path = std::env::temp_dir().join("kmeans_k20.ruq");
    save_quantizer(&Quantizer::KMeans(km), &path)?;
    let q = load_quantizer(&path)?;
    let first = &utterances[0];
    let units = q.quantize(&encoder.encode(&first.signal)?)?;
    let deduped = dedup(units.units());
    println!("utterance with {} segments -> {} units, {} after dedup", first.segments.len(), units.len(), deduped.len());
    print!("{}", format_units([deduped.as_slice()]));
    Ok(())
}

//! Generates a small synthetic corpus with its manifest.
//!
//! cargo run --example synthetic_corpus -- [OUT_DIR]

use std::path::PathBuf;

use robust_units::cli::{gen_synth_corpus, CorpusConfig, DatasetManifest, Split, MANIFEST_FILE};

fn main() -> robust_units::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("synthetic_corpus"), PathBuf::from);
    let config = CorpusConfig {
        train_utterances: 20,
        dev_utterances: 5,
        ..CorpusConfig::default()
    };
    let manifest = gen_synth_corpus(&config, 42, &out)?;
    println!("dataset {} in {}", manifest.dataset_id, out.display());

    let loaded = DatasetManifest::load(out.join(MANIFEST_FILE))?;
    for split in [Split::Train, Split::Dev] {
        let utts = loaded.utterances(split)?;
        let secs: f64 = utts.iter().map(|u| u.signal.duration_secs()).sum();
        println!("{:<5} {:>3} utterances, {:.1} s", split.name(), utts.len(), secs);
    }
    Ok(())
}

//! Dataset manifests: a JSON list of utterances with paths relative to the
//! manifest's own directory, so experiment folders can be moved freely.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::signal::{derive_seed, read_wav, resample, seeded_rng, Utterance, CANONICAL_SAMPLE_RATE};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub entries: Vec<ManifestEntry>,
    /// Directory that entry paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            dataset_id: String::new(),
            entries,
            root: root.into(),
        };
        m.check_ids()?;
        Ok(m)
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Validation(format!("duplicate utterance id {:?}", e.id)));
            }
            if e.path.is_absolute() {
                return Err(Error::Validation(format!(
                    "entry {:?} has an absolute path; paths must be relative to the manifest",
                    e.id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks ids are unique and every file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_ids()?;
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.is_file() {
                return Err(Error::Validation(format!(
                    "manifest entry {:?} points to missing file {}",
                    e.id,
                    p.display()
                )));
            }
        }
        Ok(m)
    }

    /// Decodes every utterance of a split at the canonical sample rate.
    pub fn utterances(&self, split: Split) -> Result<Vec<Utterance>> {
        let entries: Vec<&ManifestEntry> = self.split(split).collect();
        entries
            .par_iter()
            .map(|e| {
                let s = resample(&read_wav(self.resolve(e))?, CANONICAL_SAMPLE_RATE)?;
                Ok(Utterance::new(e.id.clone(), s))
            })
            .collect()
    }

    /// SHA-256 over ids, splits and file contents (first 16 hex digits).
    pub fn content_id(&self) -> Result<String> {
        let mut h = Sha256::new();
        for e in &self.entries {
            let p = self.resolve(e);
            let bytes = std::fs::read(&p).map_err(|err| Error::io(&p, err))?;
            h.update(e.id.as_bytes());
            h.update([0u8, e.split as u8]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(short_hash(&h.finalize()))
    }

    /// Builds a manifest over the `.wav` files in `dir`, assigning a seeded
    /// random `dev_fraction` of them to the dev split.
    pub fn from_wav_dir(dir: impl AsRef<Path>, dev_fraction: f64, seed: u64) -> Result<Self> {
        let dir = dir.as_ref();
        if !(0.0..=1.0).contains(&dev_fraction) {
            return Err(Error::Validation("dev fraction must lie in [0, 1]".into()));
        }
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::Validation(format!("no WAV files in {}", dir.display())));
        }
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.shuffle(&mut seeded_rng(derive_seed(seed, "dev-split", 0)));
        let n_dev = (names.len() as f64 * dev_fraction).round() as usize;
        let dev: HashSet<usize> = order[..n_dev].iter().copied().collect();
        let entries = names
            .iter()
            .enumerate()
            .map(|(i, n)| ManifestEntry {
                id: n[..n.len() - 4].to_string(),
                path: PathBuf::from(n),
                split: if dev.contains(&i) { Split::Dev } else { Split::Train },
            })
            .collect();
        let mut m = Self::new(entries, dir)?;
        m.dataset_id = m.content_id()?;
        Ok(m)
    }
}

pub(crate) fn short_hash(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

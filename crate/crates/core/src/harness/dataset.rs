use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::acoustic::{synth_emissions, EmissionMatrix, SynthConfig};
use crate::tokenization::{TokenId, Tokenizer};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub reference: String,
    /// Reference in ASR tokens.
    pub tokens: Vec<TokenId>,
    pub emissions: EmissionMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub reference: String,
    /// Relative to the manifest's directory.
    pub emissions: PathBuf,
}

/// Per-utterance generator seed.
pub fn utterance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Samples `count` distinct held-out sentences and synthesizes emissions
/// for each.
pub fn gen_dataset(
    eval: &[String],
    asr: &Tokenizer,
    count: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Vec<Utterance>, HarnessError> {
    if count == 0 {
        return Err(HarnessError::Config("utterance count must be at least 1".into()));
    }
    if count > eval.len() {
        return Err(HarnessError::CorpusTooSmall {
            requested: count,
            available: eval.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, eval.len(), count).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let reference = crate::tokenization::normalize_whitespace(&eval[line]);
            let tokens = asr.encode(&reference);
            let emissions = synth_emissions(&tokens, asr.vocab().len(), cfg, utterance_seed(seed, i))?;
            Ok(Utterance {
                id: format!("utt{i:05}"),
                reference,
                tokens,
                emissions,
            })
        })
        .collect()
}

/// Writes one emission file per utterance plus a tab-separated manifest.
pub fn write_dataset(dir: impl AsRef<Path>, utterances: &[Utterance]) -> Result<Vec<ManifestEntry>, HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(dir.join(MANIFEST_FILE))?;
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let name = PathBuf::from(format!("{}.emis", u.id));
        u.emissions.write(dir.join(&name))?;
        let entry = ManifestEntry {
            id: u.id.clone(),
            reference: u.reference.clone(),
            emissions: name,
        };
        writer.serialize(&entry)?;
        entries.push(entry);
    }
    writer.flush()?;
    Ok(entries)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(dir.as_ref().join(MANIFEST_FILE))?;
    reader
        .deserialize()
        .map(|r| r.map_err(HarnessError::from))
        .collect()
}

/// Loads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>, asr: &Tokenizer) -> Result<Vec<Utterance>, HarnessError> {
    let dir = dir.as_ref();
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            Ok(Utterance {
                tokens: asr.encode(&e.reference),
                emissions: EmissionMatrix::read(dir.join(&e.emissions))?,
                id: e.id,
                reference: e.reference,
            })
        })
        .collect()
}

//! Benchmark plumbing: synthetic corpora and utterances, WER scoring and
//! policy/beam sweeps written as CSV.

mod bench;
mod corpus;
mod dataset;
mod wer;

pub use bench::{
    cells, decode_all, parse_mode, rows_to_csv, run_bench, run_cell, strip_time_columns, write_csv, Assets,
    BenchConfig, BenchRow, Cell, CellStats, TIME_COLUMNS,
};
pub use corpus::{generate_corpus, split_corpus};
pub use dataset::{
    gen_dataset, read_dataset, read_manifest, utterance_seed, write_dataset, ManifestEntry, Utterance, MANIFEST_FILE,
};
pub use wer::{wer, wer_text, WerCounts};

use crate::acoustic::AcousticError;
use crate::decoder::DecodeError;
use crate::lm::LmError;
use crate::tokenization::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("requested {requested} utterances but only {available} held-out sentences exist")]
    CorpusTooSmall { requested: usize, available: usize },
    #[error("decoder counted {decoder} LM calls but the scorer saw {scorer}")]
    Audit { decoder: u64, scorer: u64 },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

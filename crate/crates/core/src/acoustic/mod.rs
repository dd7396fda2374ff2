//! Acoustic evidence: emission matrices, the CTC prefix recursion, a
//! CTC-derived label-synchronous scorer, exact oracles and synthetic data.

mod ctc;
mod emissions;
mod label_sync;
pub mod oracle;
mod synth;

pub use ctc::{ctc_step_extend, CtcScorePair, CtcStep};
pub use emissions::{EmissionMatrix, FILE_ROW_TOLERANCE, ROW_TOLERANCE};
pub use label_sync::{ctc_label_sync_score, CtcPrefixScorer, CtcPrefixState, LabelSyncScorer};
pub use oracle::{brute_force_ctc, brute_force_ctc_prefix, ctc_forward};
pub use synth::{synth_emissions, SynthConfig};

use crate::tokenization::TokenId;

#[derive(Debug, thiserror::Error)]
pub enum AcousticError {
    #[error("emission matrix is empty")]
    Empty,
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite value in frame {frame}")]
    NonFinite { frame: usize },
    #[error("frame {frame} is not normalized (deviation {deviation:e})")]
    Unnormalized { frame: usize, deviation: f64 },
    #[error("invalid label id {0}")]
    InvalidLabel(TokenId),
    #[error("instance too large for enumeration ({frames} frames, {vocab} symbols)")]
    TooLarge { frames: usize, vocab: usize },
    #[error("reference is empty")]
    EmptyReference,
    #[error("invalid frames-per-token range {lo}..={hi}")]
    InvalidRange { lo: usize, hi: usize },
    #[error("invalid noise settings (noise {0})")]
    InvalidNoise(f64),
    #[error("emission file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

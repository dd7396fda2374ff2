//! Beam search decoding with delayed language-model fusion.
//!
//! LM scores are applied to hypotheses after pruning, at times chosen by a
//! [`decoder::FusionPolicy`], with re-tokenization between mismatched ASR and
//! LM vocabularies and prefix-cached incremental LM scoring.

pub mod lm;
pub mod numeric;
pub mod tokenization;
pub mod acoustic;
pub mod decoder;
pub mod harness;

//! Beam search with delayed LM fusion.
//!
//! Every step extends the beam, scores the extensions with the E2E model,
//! prunes to the top K by `S_E2E + Σ λ·S_LM` using whatever LM scores the
//! hypotheses currently carry, and then, only if the fusion policy fires,
//! scores the surviving hypotheses' newly completed words with the LM. After
//! the last step every hypothesis is re-tokenized in full, `</s>` is scored,
//! and the best one is selected.

mod beam;
mod fusion;
mod search;

use serde::Serialize;

use crate::acoustic::AcousticError;
use crate::lm::{LmError, LmScorer};
use crate::tokenization::{TokenId, Tokenizer};

pub use beam::{extend_frame, extend_label, prune, Candidate, E2eScore, Hypothesis, LmState};
pub use fusion::{apply_lm_scores, fusable, ApplyStats, FusionTracker};
pub use search::Decoder;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("emission matrix has {emissions} columns but the ASR vocabulary has {asr} tokens")]
    VocabMismatch { emissions: usize, asr: usize },
    #[error("beam is empty")]
    EmptyBeam,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
}

/// When LM scores are computed during the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FusionPolicy {
    /// After every pruning step.
    Always,
    /// Only at the end: N-best rescoring.
    Never,
    /// Whenever the shortest re-tokenized hypothesis in the beam grows.
    ShortestHyp,
    /// Every `I` steps, if some hypothesis has unscored complete words.
    FixedInterval(usize),
}

impl FusionPolicy {
    /// CLI names: `shallow` (= always), `never`, `shortest`, `interval`.
    pub fn from_name(name: &str, interval: usize) -> Option<Self> {
        match name {
            "shallow" | "always" => Some(FusionPolicy::Always),
            "never" => Some(FusionPolicy::Never),
            "shortest" => Some(FusionPolicy::ShortestHyp),
            "interval" => Some(FusionPolicy::FixedInterval(interval)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionPolicy::Always => "always",
            FusionPolicy::Never => "never",
            FusionPolicy::ShortestHyp => "shortest",
            FusionPolicy::FixedInterval(_) => "interval",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecodeMode {
    /// CTC prefix beam search; one step per frame.
    FrameSync,
    /// One step per emitted label, CTC prefix scores as the E2E model.
    LabelSync,
}

/// How an LM takes part in the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LmTiming {
    /// Scored after pruning when the policy fires, on complete words only.
    Delayed,
    /// Scored on every candidate before pruning, every step. Requires the LM
    /// to share the ASR vocabulary.
    Shallow,
}

/// An external LM with its tokenizer and weight.
#[derive(Clone, Copy)]
pub struct LmSlot<'a> {
    pub scorer: &'a dyn LmScorer,
    pub tokenizer: &'a Tokenizer,
    pub weight: f64,
    /// Whether the LM score counts in the final argmax.
    pub use_in_final: bool,
    pub timing: LmTiming,
}

impl<'a> LmSlot<'a> {
    pub fn delayed(scorer: &'a dyn LmScorer, tokenizer: &'a Tokenizer, weight: f64) -> Self {
        Self {
            scorer,
            tokenizer,
            weight,
            use_in_final: true,
            timing: LmTiming::Delayed,
        }
    }

    pub fn shallow(scorer: &'a dyn LmScorer, tokenizer: &'a Tokenizer, weight: f64) -> Self {
        Self {
            timing: LmTiming::Shallow,
            ..Self::delayed(scorer, tokenizer, weight)
        }
    }

    pub fn in_final(mut self, use_in_final: bool) -> Self {
        self.use_in_final = use_in_final;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeConfig {
    /// K; `usize::MAX` disables pruning.
    pub beam: usize,
    pub mode: DecodeMode,
    pub policy: FusionPolicy,
    /// Label-synchronous step bound; defaults to `frames + 1` capped at
    /// [`MAX_LABEL_STEPS`].
    pub max_label_steps: Option<usize>,
    /// Record a per-step trace in the result.
    pub trace: bool,
}

pub const MAX_LABEL_STEPS: usize = 1024;

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 10,
            mode: DecodeMode::FrameSync,
            policy: FusionPolicy::ShortestHyp,
            max_label_steps: None,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SlotCounters {
    /// Scorer calls during the search loop.
    pub loop_calls: u64,
    /// Scorer calls at finalization.
    pub final_calls: u64,
    pub hypotheses_scored: u64,
    pub tokens_scored: u64,
}

impl SlotCounters {
    pub fn calls(&self) -> u64 {
        self.loop_calls + self.final_calls
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DecodeCounters {
    pub steps: u64,
    pub lm_calls: u64,
    pub loop_lm_calls: u64,
    pub fusion_events: u64,
    pub hypotheses_lm_scored: u64,
    pub lm_tokens_scored: u64,
    pub hypotheses_expanded: u64,
    pub per_lm: Vec<SlotCounters>,
    pub wall_ms: f64,
    /// Time spent inside LM scorer calls.
    pub lm_ms: f64,
}

/// What one prune consumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepTrace {
    pub t: usize,
    /// Delayed-fusion events completed before this step's prune.
    pub fusion_events_before: u64,
    /// Distinct LM score versions (fusion event index, 0 = never scored)
    /// carried by the hypotheses this prune kept.
    pub versions_used: Vec<u64>,
    /// Whether LM scoring ran after the prune.
    pub fused: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalHypothesis {
    /// ASR tokens without `<s>` / `</s>`.
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub e2e: f64,
    /// Unweighted LM log-probabilities of the full hypothesis with `</s>`.
    pub lm_raw: Vec<f64>,
    /// `e2e + Σ λ·lm_raw` over every LM.
    pub combined: f64,
    /// Selection score: only LMs flagged for the final decision.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeResult {
    pub best: FinalHypothesis,
    /// Sorted by selection score.
    pub nbest: Vec<FinalHypothesis>,
    pub counters: DecodeCounters,
    pub trace: Vec<StepTrace>,
}

//! The language-model scoring contract used by fusion, plus a backoff n-gram
//! realization and a latency-emulating wrapper.
//!
//! Scorers return raw natural-log probabilities; weights belong to the decoder.

mod arpa;
mod latency;
mod ngram;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::tokenization::TokenId;

pub use arpa::{read_arpa, write_arpa};
pub use latency::{wrap_with_latency, LatencyScorer};
pub use ngram::{train_ngram, NGramModel, DEFAULT_DISCOUNT, DEFAULT_ORDER};

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be in 1..=5, got {0}")]
    InvalidOrder(usize),
    #[error("discount must be in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("token {0} cannot be predicted by this model")]
    InvalidToken(TokenId),
    #[error("sequence must start with <s>")]
    MissingBos,
    #[error("request {index}: cached prefix ({scored_len} tokens) is not a prefix of the submitted sequence")]
    CacheMismatch { index: usize, scored_len: usize },
    #[error("ARPA line {line}: {msg}")]
    Arpa { line: usize, msg: String },
    #[error("ARPA {order}-grams: header declares {header} entries, body has {body}")]
    ArpaCountMismatch { order: usize, header: usize, body: usize },
    #[error("ARPA file has no 1-grams")]
    EmptyUnigrams,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const HASH_SEED: u64 = 0xcbf2_9ce4_8422_2325;

fn hash_step(h: u64, token: TokenId) -> u64 {
    let mut h = h;
    for b in token.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_tokens(tokens: &[TokenId]) -> u64 {
    tokens.iter().fold(HASH_SEED, |h, &t| hash_step(h, t))
}

/// Per-hypothesis record of what an LM has already scored.
///
/// `context` is the scorer's resume state; for an n-gram it is the last
/// `order - 1` tokens of `<s>` followed by the scored prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixCacheEntry {
    pub scored_len: usize,
    pub cum_logprob: f64,
    pub context: Vec<TokenId>,
    prefix_hash: u64,
}

impl Default for PrefixCacheEntry {
    fn default() -> Self {
        Self {
            scored_len: 0,
            cum_logprob: 0.0,
            context: Vec::new(),
            prefix_hash: HASH_SEED,
        }
    }
}

impl PrefixCacheEntry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Whether this entry describes a prefix of `tokens`.
    pub fn is_prefix_of(&self, tokens: &[TokenId]) -> bool {
        self.scored_len <= tokens.len() && hash_tokens(&tokens[..self.scored_len]) == self.prefix_hash
    }
}

/// One hypothesis in a batch: its full LM-token sequence (without `<s>`)
/// and the cache it inherited.
#[derive(Clone, Copy, Debug)]
pub struct ScoreRequest<'a> {
    pub tokens: &'a [TokenId],
    pub cache: &'a PrefixCacheEntry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreResult {
    pub cum_logprob: f64,
    pub cache: PrefixCacheEntry,
    pub new_tokens: usize,
}

/// Work a scorer has performed since the last reset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScorerCounters {
    pub calls: u64,
    pub hypotheses_scored: u64,
    pub tokens_scored: u64,
}

#[derive(Debug, Default)]
pub(crate) struct AtomicCounters {
    calls: AtomicU64,
    hypotheses: AtomicU64,
    tokens: AtomicU64,
}

impl AtomicCounters {
    pub(crate) fn record(&self, hypotheses: u64, tokens: u64) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.hypotheses.fetch_add(hypotheses, Ordering::Relaxed);
        self.tokens.fetch_add(tokens, Ordering::Relaxed);
    }

    pub(crate) fn snapshot(&self) -> ScorerCounters {
        ScorerCounters {
            calls: self.calls.load(Ordering::Relaxed),
            hypotheses_scored: self.hypotheses.load(Ordering::Relaxed),
            tokens_scored: self.tokens.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
        self.hypotheses.store(0, Ordering::Relaxed);
        self.tokens.store(0, Ordering::Relaxed);
    }
}

/// Contract between the decoder and an external LM.
pub trait LmScorer: Send + Sync {
    /// From-scratch log-probability of `seq`, which must start with `<s>`.
    /// Does not touch the counters.
    fn score_sequence(&self, seq: &[TokenId]) -> Result<f64, LmError>;

    /// Scores, for every request, only the tokens past its cached prefix.
    /// Results come back in request order.
    fn score_batch_incremental(&self, batch: &[ScoreRequest<'_>]) -> Result<Vec<ScoreResult>, LmError>;

    fn counters(&self) -> ScorerCounters;

    /// Clears counters (and any emulated cost).
    fn reset(&self);

    /// Time spent emulating inference cost, if the scorer does so.
    fn emulated_cost(&self) -> Duration {
        Duration::ZERO
    }
}

impl<T: LmScorer + ?Sized> LmScorer for &T {
    fn score_sequence(&self, seq: &[TokenId]) -> Result<f64, LmError> {
        (**self).score_sequence(seq)
    }
    fn score_batch_incremental(&self, batch: &[ScoreRequest<'_>]) -> Result<Vec<ScoreResult>, LmError> {
        (**self).score_batch_incremental(batch)
    }
    fn counters(&self) -> ScorerCounters {
        (**self).counters()
    }
    fn reset(&self) {
        (**self).reset()
    }
    fn emulated_cost(&self) -> Duration {
        (**self).emulated_cost()
    }
}

impl<T: LmScorer + ?Sized> LmScorer for Arc<T> {
    fn score_sequence(&self, seq: &[TokenId]) -> Result<f64, LmError> {
        (**self).score_sequence(seq)
    }
    fn score_batch_incremental(&self, batch: &[ScoreRequest<'_>]) -> Result<Vec<ScoreResult>, LmError> {
        (**self).score_batch_incremental(batch)
    }
    fn counters(&self) -> ScorerCounters {
        (**self).counters()
    }
    fn reset(&self) {
        (**self).reset()
    }
    fn emulated_cost(&self) -> Duration {
        (**self).emulated_cost()
    }
}

/// Free-function form of [`LmScorer::score_sequence`].
pub fn score_sequence(model: &dyn LmScorer, seq: &[TokenId]) -> Result<f64, LmError> {
    model.score_sequence(seq)
}

/// Free-function form of [`LmScorer::score_batch_incremental`].
pub fn score_batch_incremental(
    model: &dyn LmScorer,
    batch: &[ScoreRequest<'_>],
) -> Result<Vec<ScoreResult>, LmError> {
    model.score_batch_incremental(batch)
}

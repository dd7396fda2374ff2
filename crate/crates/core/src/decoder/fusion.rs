use std::sync::Arc;
use std::time::{Duration, Instant};

use super::beam::{Hypothesis, LmState};
use super::{DecodeError, FusionPolicy};
use crate::lm::{LmScorer, PrefixCacheEntry, ScoreRequest};
use crate::tokenization::{Retokenizer, TokenId};

/// Complete-word prefix of `tokens` in LM tokens, memoized on `state`.
///
/// The memo is keyed by the number of ASR tokens consumed, which is enough
/// because a hypothesis only ever grows from the one it inherited the state
/// from.
pub(crate) fn prefix_tokens(state: &mut LmState, tokens: &[TokenId], retok: &Retokenizer<'_>) -> Arc<[TokenId]> {
    let src = retok.asr().tokenizable_prefix_len(tokens);
    if let Some((len, toks)) = &state.prefix {
        if *len == src {
            return Arc::clone(toks);
        }
    }
    let lm_tokens: Arc<[TokenId]> = retok.prefix(tokens).lm_tokens.into();
    state.prefix = Some((src, Arc::clone(&lm_tokens)));
    lm_tokens
}

/// Policy state carried across the steps of one utterance, per LM.
#[derive(Clone, Debug)]
pub struct FusionTracker {
    policy: FusionPolicy,
    last_phi: usize,
}

impl FusionTracker {
    pub fn new(policy: FusionPolicy) -> Self {
        Self { policy, last_phi: 0 }
    }

    pub fn policy(&self) -> FusionPolicy {
        self.policy
    }

    /// φ at the last step that fired.
    pub fn last_phi(&self) -> usize {
        self.last_phi
    }
}

/// Whether LM scoring should run after the prune at step `t` (1-based).
pub fn fusable(
    tracker: &mut FusionTracker,
    beam: &mut [Hypothesis],
    slot: usize,
    retok: &Retokenizer<'_>,
    t: usize,
) -> bool {
    match tracker.policy {
        FusionPolicy::Always => true,
        FusionPolicy::Never => false,
        FusionPolicy::ShortestHyp => {
            let phi = beam
                .iter_mut()
                .map(|h| prefix_tokens(&mut h.lm[slot], &h.tokens, retok).len())
                .min()
                .unwrap_or(0);
            if phi > tracker.last_phi {
                tracker.last_phi = phi;
                true
            } else {
                false
            }
        }
        FusionPolicy::FixedInterval(interval) => {
            interval > 0
                && t.is_multiple_of(interval)
                && beam.iter_mut().any(|h| {
                    let scored = h.lm[slot].cache.scored_len;
                    prefix_tokens(&mut h.lm[slot], &h.tokens, retok).len() > scored
                })
        }
    }
}

/// Work done by one [`apply_lm_scores`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Whether the scorer was invoked; it is not when no hypothesis has new words.
    pub called: bool,
    pub hypotheses: u64,
    pub tokens: u64,
    pub elapsed: Duration,
}

/// Scores every hypothesis's unscored complete words with one batched call
/// and stamps the updated states with `version`.
pub fn apply_lm_scores(
    beam: &mut [Hypothesis],
    slot: usize,
    scorer: &dyn LmScorer,
    retok: &Retokenizer<'_>,
    version: u64,
) -> Result<ApplyStats, DecodeError> {
    let prefixes: Vec<Arc<[TokenId]>> = beam
        .iter_mut()
        .map(|h| prefix_tokens(&mut h.lm[slot], &h.tokens, retok))
        .collect();
    if beam
        .iter()
        .zip(&prefixes)
        .all(|(h, p)| p.len() <= h.lm[slot].cache.scored_len)
    {
        return Ok(ApplyStats::default());
    }
    let fresh = PrefixCacheEntry::empty();
    let requests: Vec<ScoreRequest<'_>> = beam
        .iter()
        .zip(&prefixes)
        .map(|(h, p)| {
            let cache = &h.lm[slot].cache;
            ScoreRequest {
                tokens: p,
                cache: if cache.is_prefix_of(p) { cache } else { &fresh },
            }
        })
        .collect();
    let start = Instant::now();
    let results = scorer.score_batch_incremental(&requests)?;
    let elapsed = start.elapsed();
    let mut stats = ApplyStats {
        called: true,
        elapsed,
        ..ApplyStats::default()
    };
    for (h, r) in beam.iter_mut().zip(results) {
        if r.new_tokens > 0 {
            stats.hypotheses += 1;
            stats.tokens += r.new_tokens as u64;
        }
        let state = &mut h.lm[slot];
        state.cache = r.cache;
        state.version = version;
    }
    Ok(stats)
}

use super::ctc::{ctc_step_extend, CtcScorePair, CtcStep};
use super::{AcousticError, EmissionMatrix};
use crate::numeric::{log_add, LOG_ZERO};
use crate::tokenization::{TokenId, BLANK, BOS, EOS, UNK};

/// Next-token scorer for label-synchronous decoding.
///
/// Scores are indexed by ASR token id. Blank and tokens that can never be
/// produced score `-inf`; `</s>` is a regular candidate.
pub trait LabelSyncScorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn next_scores(&self, state: &Self::State) -> Vec<f64>;

    /// State after appending `token` (not `</s>`).
    fn advance(&self, state: &Self::State, token: TokenId) -> Self::State;
}

/// Label-synchronous scorer built from CTC prefix probabilities.
///
/// The score of `c` after prefix `h` is `ln ψ(h·c) - ln ψ(h)`, where ψ is the
/// probability that the collapsed output starts with the given prefix; `</s>`
/// scores `ln P(h) - ln ψ(h)`. Along a finished hypothesis the scores
/// telescope to its full CTC log-probability.
#[derive(Clone, Debug)]
pub struct CtcPrefixScorer<'a> {
    emissions: &'a EmissionMatrix,
}

/// Per-prefix recursion state.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcPrefixState {
    last: Option<TokenId>,
    /// `pairs[t]`: paths over the first `t` frames collapsing exactly to the prefix.
    pairs: Vec<CtcScorePair>,
    /// `ln ψ(prefix)`.
    prefix_logprob: f64,
}

impl CtcPrefixState {
    pub fn prefix_logprob(&self) -> f64 {
        self.prefix_logprob
    }

    /// `ln P(prefix)` over all frames.
    pub fn full_logprob(&self) -> f64 {
        self.pairs.last().map_or(LOG_ZERO, CtcScorePair::total)
    }
}

fn can_emit(token: TokenId) -> bool {
    !matches!(token, BLANK | BOS | EOS | UNK)
}

impl<'a> CtcPrefixScorer<'a> {
    pub fn new(emissions: &'a EmissionMatrix) -> Self {
        Self { emissions }
    }

    /// Extends `state` by `token`, returning the new state.
    fn extend(&self, state: &CtcPrefixState, token: TokenId) -> Result<CtcPrefixState, AcousticError> {
        let frames = self.emissions.num_frames();
        let mut pairs = Vec::with_capacity(frames + 1);
        pairs.push(CtcScorePair::ZERO);
        let mut psi = LOG_ZERO;
        for t in 1..=frames {
            let row = self.emissions.row(t - 1);
            let stay = ctc_step_extend(pairs[t - 1], row, Some(token), CtcStep::Stay)?;
            let enter = ctc_step_extend(state.pairs[t - 1], row, state.last, CtcStep::Emit(token))?;
            psi = log_add(psi, enter.nonblank);
            pairs.push(stay.merge(&enter));
        }
        Ok(CtcPrefixState {
            last: Some(token),
            pairs,
            prefix_logprob: psi,
        })
    }

    /// Prefix log-probability of `state` extended by `token`, without keeping the state.
    fn extension_logprob(&self, state: &CtcPrefixState, token: TokenId) -> f64 {
        let mut psi = LOG_ZERO;
        for t in 1..=self.emissions.num_frames() {
            let row = self.emissions.row(t - 1);
            let prev = state.pairs[t - 1];
            let from = if state.last == Some(token) { prev.blank } else { prev.total() };
            psi = log_add(psi, from + row[token as usize]);
        }
        psi
    }

    /// State for an arbitrary prefix.
    pub fn state_for(&self, prefix: &[TokenId]) -> Result<CtcPrefixState, AcousticError> {
        let mut state = self.initial_state();
        for &tok in prefix {
            if tok == BLANK || tok as usize >= self.emissions.vocab_size() {
                return Err(AcousticError::InvalidLabel(tok));
            }
            state = self.extend(&state, tok)?;
        }
        Ok(state)
    }
}

impl LabelSyncScorer for CtcPrefixScorer<'_> {
    type State = CtcPrefixState;

    fn vocab_size(&self) -> usize {
        self.emissions.vocab_size()
    }

    fn initial_state(&self) -> CtcPrefixState {
        let mut pairs = Vec::with_capacity(self.emissions.num_frames() + 1);
        pairs.push(CtcScorePair::START);
        for row in self.emissions.rows() {
            let prev = *pairs.last().expect("non-empty");
            pairs.push(CtcScorePair {
                blank: prev.blank + row[BLANK as usize],
                nonblank: LOG_ZERO,
            });
        }
        CtcPrefixState {
            last: None,
            pairs,
            prefix_logprob: 0.0,
        }
    }

    fn next_scores(&self, state: &CtcPrefixState) -> Vec<f64> {
        let base = state.prefix_logprob;
        let mut out = vec![LOG_ZERO; self.emissions.vocab_size()];
        if base == LOG_ZERO {
            return out;
        }
        for (id, slot) in out.iter_mut().enumerate() {
            let id = id as TokenId;
            if id == EOS {
                *slot = state.full_logprob() - base;
            } else if can_emit(id) {
                *slot = self.extension_logprob(state, id) - base;
            }
        }
        out
    }

    fn advance(&self, state: &CtcPrefixState, token: TokenId) -> CtcPrefixState {
        self.extend(state, token)
            .expect("advance is only called with tokens scored by next_scores")
    }
}

/// Score of `candidate` after `prefix` (`</s>` allowed as candidate).
pub fn ctc_label_sync_score(
    emissions: &EmissionMatrix,
    prefix: &[TokenId],
    candidate: TokenId,
) -> Result<f64, AcousticError> {
    let scorer = CtcPrefixScorer::new(emissions);
    let state = scorer.state_for(prefix)?;
    if candidate as usize >= emissions.vocab_size() {
        return Err(AcousticError::InvalidLabel(candidate));
    }
    Ok(scorer.next_scores(&state)[candidate as usize])
}

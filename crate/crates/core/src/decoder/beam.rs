use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use super::DecodeError;
use crate::acoustic::{ctc_step_extend, CtcPrefixScorer, CtcPrefixState, CtcScorePair, CtcStep, LabelSyncScorer};
use crate::lm::PrefixCacheEntry;
use crate::numeric::LOG_ZERO;
use crate::tokenization::{TokenId, BOS, EOS};

/// What one LM has scored for a hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    pub cache: PrefixCacheEntry,
    /// Fusion event that produced `cache`; 0 if never scored.
    pub version: u64,
    /// Memoized re-tokenized prefix: (ASR tokens consumed, LM tokens).
    pub(crate) prefix: Option<(usize, Arc<[TokenId]>)>,
}

impl LmState {
    pub fn new() -> Self {
        Self {
            cache: PrefixCacheEntry::empty(),
            version: 0,
            prefix: None,
        }
    }
}

impl Default for LmState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum E2eScore {
    /// Alignment scores of the prefix over the frames seen so far.
    Frame(CtcScorePair),
    /// Accumulated label-synchronous log-probability.
    Label(f64),
}

impl E2eScore {
    pub fn total(&self) -> f64 {
        match self {
            E2eScore::Frame(pair) => pair.total(),
            E2eScore::Label(s) => *s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hypothesis {
    /// ASR tokens, starting with `<s>`.
    pub tokens: Vec<TokenId>,
    pub e2e: E2eScore,
    /// One entry per LM slot.
    pub lm: Vec<LmState>,
    /// Emitted `</s>` (label-synchronous only).
    pub ended: bool,
    pub(crate) label_state: Option<Arc<CtcPrefixState>>,
}

impl Hypothesis {
    pub fn root_frame(num_lms: usize) -> Self {
        Self {
            tokens: vec![BOS],
            e2e: E2eScore::Frame(CtcScorePair::START),
            lm: vec![LmState::new(); num_lms],
            ended: false,
            label_state: None,
        }
    }

    pub fn root_label(num_lms: usize, scorer: &CtcPrefixScorer<'_>) -> Self {
        Self {
            e2e: E2eScore::Label(0.0),
            label_state: Some(Arc::new(scorer.initial_state())),
            ..Self::root_frame(num_lms)
        }
    }

    pub fn last_label(&self) -> Option<TokenId> {
        match self.tokens.as_slice() {
            [BOS] | [] => None,
            [.., last] => Some(*last),
        }
    }

    /// `S_E2E + Σ λ·S_LM` with whatever LM scores the hypothesis carries.
    pub fn score(&self, weights: &[f64]) -> f64 {
        combined(self.e2e.total(), &self.lm, weights)
    }
}

fn combined(e2e: f64, lm: &[LmState], weights: &[f64]) -> f64 {
    lm.iter().zip(weights).fold(e2e, |acc, (s, w)| acc + w * s.cache.cum_logprob)
}

/// A one-step extension of a beam entry, not yet materialized.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub parent: usize,
    /// `None`: same prefix as the parent.
    pub token: Option<TokenId>,
    pub e2e: E2eScore,
    /// Fresh LM states; `None` inherits the parent's.
    pub lm: Option<Vec<LmState>>,
    pub score: f64,
}

impl Candidate {
    pub fn tokens<'b>(&self, beam: &'b [Hypothesis]) -> impl Iterator<Item = TokenId> + 'b {
        beam[self.parent].tokens.iter().copied().chain(self.token)
    }

    pub fn len(&self, beam: &[Hypothesis]) -> usize {
        beam[self.parent].tokens.len() + usize::from(self.token.is_some())
    }

    pub fn lm_states<'b>(&'b self, beam: &'b [Hypothesis]) -> &'b [LmState] {
        self.lm.as_deref().unwrap_or(&beam[self.parent].lm)
    }

    /// Recomputes `score` from the E2E score and the current LM states.
    pub fn rescore(&mut self, beam: &[Hypothesis], weights: &[f64]) {
        self.score = combined(self.e2e.total(), self.lm_states(beam), weights);
    }
}

/// Frame-synchronous extension: every entry stays or emits one of `labels`.
/// Extensions that reproduce an entry already in the beam are merged into
/// that entry's stay candidate.
pub fn extend_frame(
    beam: &[Hypothesis],
    frame: &[f64],
    labels: &[TokenId],
    weights: &[f64],
) -> Result<Vec<Candidate>, DecodeError> {
    let mut cands = Vec::with_capacity(beam.len() * (labels.len() + 1));
    // entry k keyed by (its prefix minus the last token, last token)
    let mut index: HashMap<(&[TokenId], TokenId), usize> = HashMap::with_capacity(beam.len());
    for (j, h) in beam.iter().enumerate() {
        let E2eScore::Frame(pair) = h.e2e else {
            return Err(DecodeError::Config("label-synchronous hypothesis in frame search".into()));
        };
        let stay = ctc_step_extend(pair, frame, h.last_label(), CtcStep::Stay)?;
        cands.push(Candidate {
            parent: j,
            token: None,
            e2e: E2eScore::Frame(stay),
            lm: None,
            score: LOG_ZERO,
        });
        if let [head @ .., last] = h.tokens.as_slice() {
            if !head.is_empty() {
                index.insert((head, *last), j);
            }
        }
    }
    for (j, h) in beam.iter().enumerate() {
        let E2eScore::Frame(pair) = h.e2e else { unreachable!() };
        let last = h.last_label();
        for &c in labels {
            let ext = ctc_step_extend(pair, frame, last, CtcStep::Emit(c))?;
            if ext.nonblank == LOG_ZERO {
                continue;
            }
            match index.get(&(h.tokens.as_slice(), c)).copied() {
                Some(k) => {
                    let E2eScore::Frame(p) = cands[k].e2e else { unreachable!() };
                    cands[k].e2e = E2eScore::Frame(p.merge(&ext));
                }
                None => cands.push(Candidate {
                    parent: j,
                    token: Some(c),
                    e2e: E2eScore::Frame(ext),
                    lm: None,
                    score: LOG_ZERO,
                }),
            }
        }
    }
    for cand in &mut cands {
        cand.rescore(beam, weights);
    }
    Ok(cands)
}

/// Label-synchronous extension: finished entries pass through; the others
/// emit every candidate label the scorer allows, `</s>` included.
pub fn extend_label(
    beam: &[Hypothesis],
    scorer: &CtcPrefixScorer<'_>,
    weights: &[f64],
) -> Result<Vec<Candidate>, DecodeError> {
    let mut cands = Vec::new();
    for (j, h) in beam.iter().enumerate() {
        let E2eScore::Label(base) = h.e2e else {
            return Err(DecodeError::Config("frame-synchronous hypothesis in label search".into()));
        };
        if h.ended {
            cands.push(Candidate {
                parent: j,
                token: None,
                e2e: h.e2e,
                lm: None,
                score: h.score(weights),
            });
            continue;
        }
        let state = h
            .label_state
            .as_ref()
            .ok_or_else(|| DecodeError::Config("hypothesis without label state".into()))?;
        for (c, s) in scorer.next_scores(state).into_iter().enumerate() {
            if s == LOG_ZERO {
                continue;
            }
            let mut cand = Candidate {
                parent: j,
                token: Some(c as TokenId),
                e2e: E2eScore::Label(base + s),
                lm: None,
                score: LOG_ZERO,
            };
            cand.rescore(beam, weights);
            cands.push(cand);
        }
    }
    Ok(cands)
}

/// Best first; ties go to the shorter, then lexicographically smaller sequence.
fn rank(beam: &[Hypothesis], a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.len(beam).cmp(&b.len(beam)))
        .then_with(|| a.tokens(beam).cmp(b.tokens(beam)))
}

/// Keeps the `k` best candidates with finite scores and materializes them.
pub fn prune(
    beam: &[Hypothesis],
    mut cands: Vec<Candidate>,
    k: usize,
    label_scorer: Option<&CtcPrefixScorer<'_>>,
) -> Vec<Hypothesis> {
    cands.retain(|c| c.score > LOG_ZERO && !c.score.is_nan());
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, |a, b| rank(beam, a, b));
        cands.truncate(k);
    }
    cands.sort_by(|a, b| rank(beam, a, b));
    cands
        .into_iter()
        .map(|c| {
            let p = &beam[c.parent];
            let mut tokens = Vec::with_capacity(p.tokens.len() + 1);
            tokens.extend_from_slice(&p.tokens);
            tokens.extend(c.token);
            let ended = p.ended || c.token == Some(EOS);
            let label_state = match (label_scorer, c.token, &p.label_state) {
                (Some(s), Some(tok), Some(state)) if tok != EOS => Some(Arc::new(s.advance(state, tok))),
                _ => p.label_state.clone(),
            };
            Hypothesis {
                tokens,
                e2e: c.e2e,
                lm: c.lm.unwrap_or_else(|| p.lm.clone()),
                ended,
                label_state,
            }
        })
        .collect()
}

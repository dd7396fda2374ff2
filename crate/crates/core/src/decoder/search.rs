use std::time::{Duration, Instant};

use super::beam::{extend_frame, extend_label, prune, Candidate, E2eScore, Hypothesis};
use super::fusion::{apply_lm_scores, fusable, FusionTracker};
use super::{
    DecodeConfig, DecodeCounters, DecodeError, DecodeMode, DecodeResult, FinalHypothesis, FusionPolicy, LmSlot,
    LmTiming, SlotCounters, StepTrace, MAX_LABEL_STEPS,
};
use crate::acoustic::{CtcPrefixScorer, EmissionMatrix, LabelSyncScorer};
use crate::lm::{PrefixCacheEntry, ScoreRequest};
use crate::tokenization::{Retokenizer, TokenId, Tokenizer, BOS, EOS};

/// Beam search over one ASR tokenizer and any number of external LMs.
pub struct Decoder<'a> {
    asr: &'a Tokenizer,
    slots: Vec<LmSlot<'a>>,
    config: DecodeConfig,
    labels: Vec<TokenId>,
    weights: Vec<f64>,
}

struct Run {
    counters: DecodeCounters,
    lm_time: Duration,
    trace: Vec<StepTrace>,
}

impl<'a> Decoder<'a> {
    pub fn new(asr: &'a Tokenizer, slots: Vec<LmSlot<'a>>, config: DecodeConfig) -> Result<Self, DecodeError> {
        if config.beam == 0 {
            return Err(DecodeError::Config("beam size must be at least 1".into()));
        }
        if config.policy == FusionPolicy::FixedInterval(0) {
            return Err(DecodeError::Config("fusion interval must be at least 1".into()));
        }
        if config.max_label_steps == Some(0) {
            return Err(DecodeError::Config("label step bound must be at least 1".into()));
        }
        for (i, slot) in slots.iter().enumerate() {
            if !slot.weight.is_finite() {
                return Err(DecodeError::Config(format!("LM {i} has a non-finite weight")));
            }
            if slot.timing == LmTiming::Shallow && !Retokenizer::new(asr, slot.tokenizer).is_identity() {
                return Err(DecodeError::Config(format!(
                    "LM {i} is shallow-fused but does not share the ASR vocabulary"
                )));
            }
        }
        let labels = asr.vocab().regular_ids().collect();
        let weights = slots.iter().map(|s| s.weight).collect();
        Ok(Self {
            asr,
            slots,
            config,
            labels,
            weights,
        })
    }

    pub fn config(&self) -> &DecodeConfig {
        &self.config
    }

    pub fn slots(&self) -> &[LmSlot<'a>] {
        &self.slots
    }

    pub fn decode(&self, emissions: &EmissionMatrix) -> Result<DecodeResult, DecodeError> {
        if emissions.vocab_size() != self.asr.vocab().len() {
            return Err(DecodeError::VocabMismatch {
                emissions: emissions.vocab_size(),
                asr: self.asr.vocab().len(),
            });
        }
        let start = Instant::now();
        let mut run = Run {
            counters: DecodeCounters {
                per_lm: vec![SlotCounters::default(); self.slots.len()],
                ..DecodeCounters::default()
            },
            lm_time: Duration::ZERO,
            trace: Vec::new(),
        };
        let retoks: Vec<Retokenizer<'_>> = self.slots.iter().map(|s| Retokenizer::new(self.asr, s.tokenizer)).collect();
        let mut trackers: Vec<FusionTracker> = self.slots.iter().map(|_| FusionTracker::new(self.config.policy)).collect();

        let label_scorer = CtcPrefixScorer::new(emissions);
        let beam = match self.config.mode {
            DecodeMode::FrameSync => {
                let mut beam = vec![Hypothesis::root_frame(self.slots.len())];
                for t in 1..=emissions.num_frames() {
                    let cands = extend_frame(&beam, emissions.row(t - 1), &self.labels, &self.weights)?;
                    beam = self.step(&beam, cands, None, t, &retoks, &mut trackers, &mut run)?;
                }
                beam
            }
            DecodeMode::LabelSync => {
                let max_steps = self
                    .config
                    .max_label_steps
                    .unwrap_or_else(|| (emissions.num_frames() + 1).min(MAX_LABEL_STEPS));
                let mut beam = vec![Hypothesis::root_label(self.slots.len(), &label_scorer)];
                let mut t = 0;
                while t < max_steps && !beam.iter().all(|h| h.ended) {
                    t += 1;
                    let cands = extend_label(&beam, &label_scorer, &self.weights)?;
                    beam = self.step(&beam, cands, Some(&label_scorer), t, &retoks, &mut trackers, &mut run)?;
                }
                beam
            }
        };

        let nbest = self.finalize(beam, &label_scorer, &retoks, &mut run)?;
        let mut counters = run.counters;
        for c in &counters.per_lm {
            counters.lm_calls += c.calls();
            counters.loop_lm_calls += c.loop_calls;
            counters.hypotheses_lm_scored += c.hypotheses_scored;
            counters.lm_tokens_scored += c.tokens_scored;
        }
        counters.lm_ms = run.lm_time.as_secs_f64() * 1e3;
        counters.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let best = nbest.first().cloned().ok_or(DecodeError::EmptyBeam)?;
        Ok(DecodeResult {
            best,
            nbest,
            counters,
            trace: run.trace,
        })
    }

    /// Shallow scoring, prune, then delayed fusion if the policy fires.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        beam: &[Hypothesis],
        mut cands: Vec<Candidate>,
        label_scorer: Option<&CtcPrefixScorer<'_>>,
        t: usize,
        retoks: &[Retokenizer<'_>],
        trackers: &mut [FusionTracker],
        run: &mut Run,
    ) -> Result<Vec<Hypothesis>, DecodeError> {
        run.counters.steps += 1;
        run.counters.hypotheses_expanded += cands.len() as u64;
        self.score_shallow(beam, &mut cands, run)?;
        let mut next = prune(beam, cands, self.config.beam, label_scorer);
        if next.is_empty() {
            return Err(DecodeError::EmptyBeam);
        }
        let events_before = run.counters.fusion_events;
        let versions_used = if self.config.trace { self.versions(&next) } else { Vec::new() };

        let mut fused = false;
        for (s, slot) in self.slots.iter().enumerate() {
            if slot.timing != LmTiming::Delayed || !fusable(&mut trackers[s], &mut next, s, &retoks[s], t) {
                continue;
            }
            let version = run.counters.fusion_events + 1;
            let stats = apply_lm_scores(&mut next, s, slot.scorer, &retoks[s], version)?;
            if stats.called {
                run.counters.fusion_events = version;
                run.lm_time += stats.elapsed;
                let c = &mut run.counters.per_lm[s];
                c.loop_calls += 1;
                c.hypotheses_scored += stats.hypotheses;
                c.tokens_scored += stats.tokens;
                fused = true;
            }
        }
        if self.config.trace {
            run.trace.push(StepTrace {
                t,
                fusion_events_before: events_before,
                versions_used,
                fused,
            });
        }
        Ok(next)
    }

    fn versions(&self, beam: &[Hypothesis]) -> Vec<u64> {
        let mut v: Vec<u64> = beam
            .iter()
            .flat_map(|h| {
                h.lm.iter()
                    .zip(&self.slots)
                    .filter(|(_, slot)| slot.timing == LmTiming::Delayed)
                    .map(|(state, _)| state.version)
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Scores every candidate with the shallow-fused LMs, one call per LM.
    fn score_shallow(&self, beam: &[Hypothesis], cands: &mut [Candidate], run: &mut Run) -> Result<(), DecodeError> {
        let mut touched = false;
        for (s, slot) in self.slots.iter().enumerate() {
            if slot.timing != LmTiming::Shallow {
                continue;
            }
            let mut flat = Vec::new();
            let mut spans = Vec::with_capacity(cands.len());
            for c in cands.iter() {
                let start = flat.len();
                flat.extend_from_slice(&beam[c.parent].tokens[1..]);
                flat.extend(c.token);
                spans.push(start..flat.len());
            }
            if cands
                .iter()
                .zip(&spans)
                .all(|(c, span)| span.len() <= c.lm_states(beam)[s].cache.scored_len)
            {
                continue;
            }
            let requests: Vec<ScoreRequest<'_>> = cands
                .iter()
                .zip(&spans)
                .map(|(c, span)| ScoreRequest {
                    tokens: &flat[span.clone()],
                    cache: &c.lm_states(beam)[s].cache,
                })
                .collect();
            let start = Instant::now();
            let results = slot.scorer.score_batch_incremental(&requests)?;
            run.lm_time += start.elapsed();
            let counter = &mut run.counters.per_lm[s];
            counter.loop_calls += 1;
            for (c, r) in cands.iter_mut().zip(results) {
                if r.new_tokens == 0 {
                    continue;
                }
                counter.hypotheses_scored += 1;
                counter.tokens_scored += r.new_tokens as u64;
                let parent = &beam[c.parent];
                let states = c.lm.get_or_insert_with(|| parent.lm.clone());
                states[s].cache = r.cache;
            }
            touched = true;
        }
        if touched {
            for c in cands.iter_mut() {
                c.rescore(beam, &self.weights);
            }
        }
        Ok(())
    }

    /// Completes E2E scores with `</s>`, scores every hypothesis in full with
    /// every LM, and sorts by the selection score.
    fn finalize(
        &self,
        beam: Vec<Hypothesis>,
        label_scorer: &CtcPrefixScorer<'_>,
        retoks: &[Retokenizer<'_>],
        run: &mut Run,
    ) -> Result<Vec<FinalHypothesis>, DecodeError> {
        let e2e: Vec<f64> = beam
            .iter()
            .map(|h| match (h.e2e, &h.label_state) {
                (E2eScore::Label(s), Some(state)) if !h.ended => s + label_scorer.next_scores(state)[EOS as usize],
                (e, _) => e.total(),
            })
            .collect();

        let mut lm_raw = vec![Vec::with_capacity(self.slots.len()); beam.len()];
        for (s, slot) in self.slots.iter().enumerate() {
            let seqs: Vec<Vec<TokenId>> = beam
                .iter()
                .map(|h| {
                    let mut seq = retoks[s].full(&h.tokens).lm_tokens;
                    seq.push(EOS);
                    seq
                })
                .collect();
            let fresh = PrefixCacheEntry::empty();
            let requests: Vec<ScoreRequest<'_>> = beam
                .iter()
                .zip(&seqs)
                .map(|(h, seq)| {
                    let cache = &h.lm[s].cache;
                    ScoreRequest {
                        tokens: seq,
                        cache: if cache.is_prefix_of(seq) { cache } else { &fresh },
                    }
                })
                .collect();
            let counter = &mut run.counters.per_lm[s];
            let results = if requests.iter().all(|r| r.tokens.len() <= r.cache.scored_len) {
                requests.iter().map(|r| r.cache.cum_logprob).collect::<Vec<_>>()
            } else {
                let start = Instant::now();
                let results = slot.scorer.score_batch_incremental(&requests)?;
                run.lm_time += start.elapsed();
                counter.final_calls += 1;
                results
                    .into_iter()
                    .map(|r| {
                        if r.new_tokens > 0 {
                            counter.hypotheses_scored += 1;
                            counter.tokens_scored += r.new_tokens as u64;
                        }
                        r.cum_logprob
                    })
                    .collect()
            };
            for (raw, score) in lm_raw.iter_mut().zip(results) {
                raw.push(score);
            }
        }

        let mut finals: Vec<FinalHypothesis> = beam
            .iter()
            .zip(e2e)
            .zip(lm_raw)
            .map(|((h, e2e), lm_raw)| {
                let tokens: Vec<TokenId> = h.tokens.iter().copied().filter(|&t| t != BOS && t != EOS).collect();
                let mut combined = e2e;
                let mut score = e2e;
                for (slot, raw) in self.slots.iter().zip(&lm_raw) {
                    combined += slot.weight * raw;
                    if slot.use_in_final {
                        score += slot.weight * raw;
                    }
                }
                FinalHypothesis {
                    text: self.asr.decode_normalized(&tokens).unwrap_or_default(),
                    tokens,
                    e2e,
                    lm_raw,
                    combined,
                    score,
                }
            })
            .collect();
        finals.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        Ok(finals)
    }
}

mod common;

use common::*;
use delayed_fusion::acoustic::{ctc_forward, synth_emissions, CtcPrefixScorer, EmissionMatrix, SynthConfig};
use delayed_fusion::decoder::*;
use delayed_fusion::lm::{LmScorer, NGramModel};
use delayed_fusion::tokenization::{Retokenizer, TokenId, Tokenizer, VocabKind, BOS, EOS};
use rand::Rng;

fn config(beam: usize, policy: FusionPolicy) -> DecodeConfig {
    DecodeConfig {
        beam,
        policy,
        ..DecodeConfig::default()
    }
}

const ALL_POLICIES: [FusionPolicy; 4] = [
    FusionPolicy::Always,
    FusionPolicy::ShortestHyp,
    FusionPolicy::FixedInterval(2),
    FusionPolicy::Never,
];

struct Small {
    asr: Tokenizer,
    lm_tok: Tokenizer,
    lm: NGramModel,
}

fn small() -> Small {
    let asr = tiny_asr();
    let lm_tok = tiny_lm_tok();
    let lm = tiny_lm(&lm_tok);
    Small { asr, lm_tok, lm }
}

#[test]
fn clean_utterance_greedy_never() {
    let s = small();
    let reference: Vec<TokenId> = s.asr.encode("ab a bb b");
    let em = synth_emissions(&reference, s.asr.vocab().len(), &SynthConfig::tight(0.0), 5).unwrap();
    let dec = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.3)], config(1, FusionPolicy::Never)).unwrap();
    let r = dec.decode(&em).unwrap();
    assert_eq!(r.best.tokens, reference);
    assert_eq!(r.best.text, "ab a bb b");
}

#[test]
fn invalid_configurations() {
    let s = small();
    let slots = || vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.3)];
    assert!(Decoder::new(&s.asr, slots(), config(0, FusionPolicy::Never)).is_err());
    assert!(Decoder::new(&s.asr, slots(), config(4, FusionPolicy::FixedInterval(0))).is_err());
    let bad = vec![LmSlot::delayed(&s.lm, &s.lm_tok, f64::NAN)];
    assert!(Decoder::new(&s.asr, bad, config(4, FusionPolicy::Never)).is_err());
    // shallow fusion needs a shared vocabulary
    let shallow = vec![LmSlot::shallow(&s.lm, &s.lm_tok, 0.3)];
    assert!(matches!(
        Decoder::new(&s.asr, shallow, config(4, FusionPolicy::Never)),
        Err(DecodeError::Config(_))
    ));
    let dec = Decoder::new(&s.asr, slots(), config(4, FusionPolicy::Never)).unwrap();
    let wrong = EmissionMatrix::from_logits(2, 3, vec![0.0; 6]).unwrap();
    assert!(matches!(dec.decode(&wrong), Err(DecodeError::VocabMismatch { .. })));
}

#[test]
fn never_equals_nbest_rescoring() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let mut rng = rng(11);
    for _ in 0..10 {
        let em = random_emissions(7, s.asr.vocab().len(), 3.0, &mut rng);
        let k = 6;
        let plain = Decoder::new(&s.asr, vec![], config(k, FusionPolicy::Never)).unwrap().decode(&em).unwrap();
        let never = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.4)], config(k, FusionPolicy::Never))
            .unwrap()
            .decode(&em)
            .unwrap();
        let mut rescored: Vec<(Vec<TokenId>, f64, f64)> = plain
            .nbest
            .iter()
            .map(|h| {
                let lm = scratch_lm_score(&s.lm, &retok, &h.tokens);
                (h.tokens.clone(), h.e2e, h.e2e + 0.4 * lm)
            })
            .collect();
        rescored.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then(a.0.len().cmp(&b.0.len()))
                .then(a.0.cmp(&b.0))
        });
        assert_eq!(never.nbest.len(), rescored.len());
        for (h, (tokens, e2e, combined)) in never.nbest.iter().zip(&rescored) {
            assert_eq!(&h.tokens, tokens);
            assert_eq!(h.e2e, *e2e);
            assert!((h.combined - combined).abs() <= 1e-12);
        }
        assert_eq!(never.counters.loop_lm_calls, 0);
        assert_eq!(never.counters.lm_calls, 1);
    }
}

/// Exhaustive argmax of full CTC + λ·LM over every label sequence.
fn exhaustive(em: &EmissionMatrix, s: &Small, weight: f64) -> (Vec<TokenId>, f64) {
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let labels: Vec<TokenId> = s.asr.vocab().regular_ids().collect();
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    for seq in all_sequences(&labels, em.num_frames()) {
        let ctc = ctc_forward(em, &seq).unwrap();
        if ctc == f64::NEG_INFINITY {
            continue;
        }
        let score = ctc + weight * scratch_lm_score(&s.lm, &retok, &seq);
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((seq, score));
        }
    }
    best.unwrap()
}

#[test]
fn unpruned_search_matches_exhaustive_argmax() {
    let s = small();
    let mut rng = rng(3);
    for _ in 0..4 {
        let em = random_emissions(5, s.asr.vocab().len(), 2.0, &mut rng);
        let (want, want_score) = exhaustive(&em, &s, 0.5);
        for mode in [DecodeMode::FrameSync, DecodeMode::LabelSync] {
            for policy in ALL_POLICIES {
                let cfg = DecodeConfig {
                    beam: usize::MAX,
                    mode,
                    policy,
                    ..DecodeConfig::default()
                };
                let r = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.5)], cfg)
                    .unwrap()
                    .decode(&em)
                    .unwrap();
                assert_eq!(r.best.tokens, want, "{mode:?} {policy:?}");
                assert!((r.best.score - want_score).abs() < 1e-9, "{mode:?} {policy:?}");
            }
        }
    }
}

#[test]
fn frame_extension_counts_and_merging() {
    let beam = vec![Hypothesis::root_frame(0)];
    let frame = vec![(0.25f64).ln(); 4];
    // blank + 3 regular labels
    let cands = extend_frame(&beam, &frame, &[1, 2, 3], &[]).unwrap();
    assert_eq!(cands.len(), 4);

    let labels = [4, 5, 6];
    let f = vec![(1.0f64 / 7.0).ln(); 7];
    let beam = vec![Hypothesis::root_frame(0)];
    let beam = prune(&beam, extend_frame(&beam, &f, &labels, &[]).unwrap(), 100, None);
    let raw = beam.len() * (labels.len() + 1);
    let cands = extend_frame(&beam, &f, &labels, &[]).unwrap();
    assert!(cands.len() < raw);
    let mut seen: Vec<Vec<TokenId>> = cands.iter().map(|c| c.tokens(&beam).collect()).collect();
    let n = seen.len();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), n);
}

#[test]
fn label_sync_beams_share_length_and_finish() {
    let s = small();
    let mut rng = rng(8);
    let em = random_emissions(5, s.asr.vocab().len(), 2.0, &mut rng);
    let scorer = CtcPrefixScorer::new(&em);
    let mut beam = vec![Hypothesis::root_label(0, &scorer)];
    for _ in 0..=em.num_frames() {
        let cands = extend_label(&beam, &scorer, &[]).unwrap();
        beam = prune(&beam, cands, 4, Some(&scorer));
        let live: Vec<usize> = beam.iter().filter(|h| !h.ended).map(|h| h.tokens.len()).collect();
        assert!(live.windows(2).all(|w| w[0] == w[1]));
        if beam.iter().all(|h| h.ended) {
            break;
        }
    }
    assert!(beam.iter().all(|h| h.ended));
    let before: Vec<_> = beam.iter().map(|h| (h.tokens.clone(), h.score(&[]))).collect();
    let cands = extend_label(&beam, &scorer, &[]).unwrap();
    assert!(cands.iter().all(|c| c.token.is_none()));
    let after: Vec<_> = prune(&beam, cands, 4, Some(&scorer))
        .into_iter()
        .map(|h| { let s = h.score(&[]); (h.tokens, s) })
        .collect();
    assert_eq!(before, after);
}

#[test]
fn prune_identity_and_tie_rule() {
    let labels = [4, 5, 6];
    let f = vec![(1.0f64 / 7.0).ln(); 7];
    let beam = vec![Hypothesis::root_frame(0)];
    let cands = extend_frame(&beam, &f, &labels, &[]).unwrap();
    let n = cands.len();
    let kept = prune(&beam, cands.clone(), n, None);
    assert_eq!(kept.len(), n);
    // all four share one score: the stay (shorter) wins the tie
    let one = prune(&beam, cands, 1, None);
    assert_eq!(one[0].tokens, vec![BOS]);
}

#[test]
fn prune_matches_full_sort() {
    let mut rng = rng(21);
    for _ in 0..20 {
        // 10 parents, 5 labels each, with merged duplicates
        let labels: Vec<TokenId> = (4..9).collect();
        let mut beam = vec![Hypothesis::root_frame(0)];
        for _ in 0..3 {
            let em = random_emissions(1, 9, 3.0, &mut rng);
            beam = prune(&beam, extend_frame(&beam, em.row(0), &labels, &[]).unwrap(), 10, None);
        }
        let em = random_emissions(1, 9, 3.0, &mut rng);
        let cands = extend_frame(&beam, em.row(0), &labels, &[]).unwrap();
        assert!(cands.len() > 10);
        let mut reference: Vec<(f64, Vec<TokenId>)> = cands
            .iter()
            .map(|c| (c.score, c.tokens(&beam).collect()))
            .collect();
        reference.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.len().cmp(&b.1.len()))
                .then(a.1.cmp(&b.1))
        });
        let kept: Vec<Vec<TokenId>> = prune(&beam, cands, 10, None).into_iter().map(|h| h.tokens).collect();
        let want: Vec<Vec<TokenId>> = reference.into_iter().take(10).map(|r| r.1).collect();
        assert_eq!(kept, want);
    }
}

/// A beam whose single hypothesis gains one complete word per step.
fn growing_beam(asr: &Tokenizer, steps: usize) -> Vec<Vec<Hypothesis>> {
    let mut h = Hypothesis::root_frame(1);
    let word = asr.vocab().id("▁a").unwrap();
    let mut out = Vec::new();
    for _ in 0..steps {
        h.tokens.push(word);
        out.push(vec![h.clone()]);
    }
    out
}

#[test]
fn fusable_policies_on_scripted_trace() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let steps = growing_beam(&s.asr, 16);

    let mut never = FusionTracker::new(FusionPolicy::Never);
    let mut interval = FusionTracker::new(FusionPolicy::FixedInterval(4));
    let mut shortest = FusionTracker::new(FusionPolicy::ShortestHyp);
    let mut fired_interval = Vec::new();
    let mut fired_shortest = 0;
    for (i, beam) in steps.iter().enumerate() {
        let t = i + 1;
        let mut beam = beam.clone();
        assert!(!fusable(&mut never, &mut beam, 0, &retok, t));
        if fusable(&mut interval, &mut beam, 0, &retok, t) {
            fired_interval.push(t);
        }
        if fusable(&mut shortest, &mut beam, 0, &retok, t) {
            fired_shortest += 1;
        }
    }
    assert_eq!(fired_interval, vec![4, 8, 12, 16]);
    // φ grows by one word per step after the first
    assert_eq!(fired_shortest, 15);
    assert_eq!(shortest.last_phi(), 15);
}

#[test]
fn shortest_fires_once_per_phi_increment() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let steps = growing_beam(&s.asr, 6);
    let mut tracker = FusionTracker::new(FusionPolicy::ShortestHyp);
    let mut fires = 0;
    for (i, beam) in steps.iter().enumerate() {
        // evaluate the same beam twice: the second evaluation never fires
        for _ in 0..2 {
            let mut b = beam.clone();
            if fusable(&mut tracker, &mut b, 0, &retok, i + 1) {
                fires += 1;
            }
        }
    }
    assert_eq!(fires, 5);
}

#[test]
fn apply_scores_only_new_words() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let mut beam = growing_beam(&s.asr, 3).pop().unwrap();
    // tokens: <s> ▁a ▁a ▁a, two complete words
    let stats = apply_lm_scores(&mut beam, 0, &s.lm, &retok, 1).unwrap();
    assert!(stats.called);
    assert_eq!(stats.tokens, 2);
    let scored = beam[0].lm[0].clone();
    let again = apply_lm_scores(&mut beam, 0, &s.lm, &retok, 2).unwrap();
    assert!(!again.called);
    assert_eq!(again.tokens, 0);
    assert_eq!(beam[0].lm[0].cache, scored.cache);
    let a = s.lm_tok.vocab().id("▁a").unwrap();
    let scratch = s.lm.score_sequence(&[BOS, a, a]).unwrap();
    assert!((scored.cache.cum_logprob - scratch).abs() < 1e-12);
}

#[test]
fn always_with_shared_vocab_matches_scratch_shallow_fusion() {
    let asr = tiny_asr();
    let lm_tok = Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm));
    let lm = tiny_lm(&lm_tok);
    let retok = Retokenizer::new(&asr, &lm_tok);
    let mut rng = rng(4);
    for _ in 0..5 {
        let em = random_emissions(5, asr.vocab().len(), 2.0, &mut rng);
        let cfg = DecodeConfig {
            beam: usize::MAX,
            policy: FusionPolicy::Always,
            ..DecodeConfig::default()
        };
        let r = Decoder::new(&asr, vec![LmSlot::delayed(&lm, &lm_tok, 0.7)], cfg)
            .unwrap()
            .decode(&em)
            .unwrap();
        for h in &r.nbest {
            let want = ctc_forward(&em, &h.tokens).unwrap() + 0.7 * scratch_lm_score(&lm, &retok, &h.tokens);
            assert!((h.combined - want).abs() < 1e-9);
        }
    }
}

#[test]
fn two_lms_store_raw_scores() {
    let s = small();
    let nlm_tok = Tokenizer::new(s.asr.vocab().with_kind(VocabKind::Lm));
    let nlm = tiny_lm(&nlm_tok);
    let mut rng = rng(6);
    let em = random_emissions(6, s.asr.vocab().len(), 2.0, &mut rng);
    let slots = vec![
        LmSlot::delayed(&s.lm, &s.lm_tok, 0.15),
        LmSlot::shallow(&nlm, &nlm_tok, 0.15),
    ];
    let r = Decoder::new(&s.asr, slots, config(8, FusionPolicy::ShortestHyp))
        .unwrap()
        .decode(&em)
        .unwrap();
    let retok1 = Retokenizer::new(&s.asr, &s.lm_tok);
    let retok2 = Retokenizer::new(&s.asr, &nlm_tok);
    for h in &r.nbest {
        let raw1 = scratch_lm_score(&s.lm, &retok1, &h.tokens);
        let raw2 = scratch_lm_score(&nlm, &retok2, &h.tokens);
        assert!((h.lm_raw[0] - raw1).abs() < 1e-9);
        assert!((h.lm_raw[1] - raw2).abs() < 1e-9);
        assert!((h.combined - (h.e2e + 0.15 * raw1 + 0.15 * raw2)).abs() < 1e-9);
    }
    assert_eq!(r.counters.per_lm.len(), 2);
    assert!(r.counters.per_lm[1].loop_calls > 0);
}

#[test]
fn finalize_scores_trailing_word_and_end() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let reference = s.asr.encode("a bb");
    let em = synth_emissions(&reference, s.asr.vocab().len(), &SynthConfig::tight(0.0), 1).unwrap();
    let r = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 1.0)], config(1, FusionPolicy::Always))
        .unwrap()
        .decode(&em)
        .unwrap();
    assert_eq!(r.nbest.len(), 1);
    assert_eq!(r.best.tokens, reference);
    // "bb" is never followed by a word-begin token during the loop
    let want = scratch_lm_score(&s.lm, &retok, &reference);
    assert!((r.best.lm_raw[0] - want).abs() < 1e-12);
}

#[test]
fn selection_ignores_lms_excluded_from_final() {
    let s = small();
    let nlm_tok = Tokenizer::new(s.asr.vocab().with_kind(VocabKind::Lm));
    let nlm = tiny_lm(&nlm_tok);
    let mut rng = rng(13);
    for _ in 0..4 {
        let em = random_emissions(5, s.asr.vocab().len(), 2.0, &mut rng);
        let pick = |w: f64| {
            let slots = vec![
                LmSlot::delayed(&s.lm, &s.lm_tok, 0.3),
                LmSlot::shallow(&nlm, &nlm_tok, w).in_final(false),
            ];
            let r = Decoder::new(&s.asr, slots, config(usize::MAX, FusionPolicy::ShortestHyp))
                .unwrap()
                .decode(&em)
                .unwrap();
            (r.best.tokens.clone(), r.best.score)
        };
        let (a, sa) = pick(0.1);
        let (b, sb) = pick(2.0);
        assert_eq!(a, b);
        assert!((sa - sb).abs() < 1e-12);
    }
}

#[test]
fn stale_scores_feed_pruning_between_events() {
    let s = small();
    let reference = s.asr.encode("ab a bb ab b a");
    let em = synth_emissions(&reference, s.asr.vocab().len(), &SynthConfig::default(), 2).unwrap();
    for policy in [FusionPolicy::ShortestHyp, FusionPolicy::FixedInterval(3), FusionPolicy::Always] {
        let cfg = DecodeConfig {
            beam: 4,
            policy,
            trace: true,
            ..DecodeConfig::default()
        };
        let r = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.5)], cfg)
            .unwrap()
            .decode(&em)
            .unwrap();
        assert_eq!(r.trace.len(), em.num_frames());
        let mut fused_before = false;
        for step in &r.trace {
            // a prune never sees scores newer than the last event
            assert!(step.versions_used.iter().all(|&v| v <= step.fusion_events_before));
            // after an event, every kept hypothesis carries a score from some event
            if fused_before {
                assert!(step.versions_used.iter().all(|&v| v > 0), "{policy:?} t={}", step.t);
            }
            fused_before |= step.fused;
        }
        assert!(r.trace.iter().any(|s| s.fused));
        let events = r.trace.iter().filter(|s| s.fused).count() as u64;
        assert_eq!(events, r.counters.fusion_events);
    }
}

#[test]
fn call_bounds() {
    let s = small();
    let retok = Retokenizer::new(&s.asr, &s.lm_tok);
    let mut rng = rng(30);
    let words = ["a", "ab", "b", "bb"];
    for _ in 0..10 {
        let n = rng.random_range(3..8);
        let text: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
        let reference = s.asr.encode(&text.join(" "));
        let em = synth_emissions(&reference, s.asr.vocab().len(), &SynthConfig::default(), rng.random()).unwrap();
        let run = |policy| {
            Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.5)], config(5, policy))
                .unwrap()
                .decode(&em)
                .unwrap()
        };
        let r = run(FusionPolicy::ShortestHyp);
        let shortest = r.nbest.iter().map(|h| retok.full(&h.tokens).lm_tokens.len()).min().unwrap();
        assert!(r.counters.loop_lm_calls as usize <= shortest);
        assert_eq!(r.counters.lm_calls, r.counters.loop_lm_calls + 1);
        let t = em.num_frames();
        let mut last = u64::MAX;
        for i in [1, 2, 4, 8] {
            let calls = run(FusionPolicy::FixedInterval(i)).counters.loop_lm_calls;
            assert!(calls as usize <= t.div_ceil(i));
            assert!(calls <= last);
            last = calls;
        }
    }
}

#[test]
fn delayed_scores_fewer_hypotheses_than_shallow() {
    let asr = tiny_asr();
    let lm_tok = Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm));
    let lm = tiny_lm(&lm_tok);
    let reference = asr.encode("ab a bb a b");
    let em = synth_emissions(&reference, asr.vocab().len(), &SynthConfig::default(), 3).unwrap();
    // V > K
    let k = 2;
    let delayed = Decoder::new(&asr, vec![LmSlot::delayed(&lm, &lm_tok, 0.5)], config(k, FusionPolicy::ShortestHyp))
        .unwrap()
        .decode(&em)
        .unwrap();
    let shallow = Decoder::new(&asr, vec![LmSlot::shallow(&lm, &lm_tok, 0.5)], config(k, FusionPolicy::Never))
        .unwrap()
        .decode(&em)
        .unwrap();
    assert!(delayed.counters.hypotheses_lm_scored < shallow.counters.hypotheses_lm_scored);
}

#[test]
fn decoding_is_deterministic() {
    let s = small();
    let mut rng = rng(77);
    let em = random_emissions(9, s.asr.vocab().len(), 3.0, &mut rng);
    let dec = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.5)], config(4, FusionPolicy::ShortestHyp))
        .unwrap();
    let a = dec.decode(&em).unwrap();
    let b = dec.decode(&em).unwrap();
    assert_eq!(a.nbest, b.nbest);
    assert_eq!(a.counters.lm_tokens_scored, b.counters.lm_tokens_scored);
    assert_eq!(a.counters.hypotheses_expanded, b.counters.hypotheses_expanded);
}

#[test]
fn label_sync_finishes_with_end_token() {
    let s = small();
    let reference = s.asr.encode("ab bb a");
    let synth = SynthConfig {
        noise: 0.1,
        ..SynthConfig::default()
    };
    let em = synth_emissions(&reference, s.asr.vocab().len(), &synth, 9).unwrap();
    let cfg = DecodeConfig {
        beam: 3,
        mode: DecodeMode::LabelSync,
        policy: FusionPolicy::ShortestHyp,
        ..DecodeConfig::default()
    };
    let r = Decoder::new(&s.asr, vec![LmSlot::delayed(&s.lm, &s.lm_tok, 0.3)], cfg)
        .unwrap()
        .decode(&em)
        .unwrap();
    assert_eq!(r.best.tokens, reference);
    assert!(r.best.tokens.iter().all(|&t| t != EOS && t != BOS));
    assert!(r.counters.steps as usize <= em.num_frames() + 1);
}

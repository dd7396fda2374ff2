#![allow(dead_code)]

use delayed_fusion::acoustic::EmissionMatrix;
use delayed_fusion::lm::{train_ngram, LmScorer, NGramModel};
use delayed_fusion::tokenization::{Retokenizer, TokenId, Tokenizer, VocabKind, Vocabulary, BOS, EOS, WORD_BEGIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tokenizer(kind: VocabKind, pieces: &[&str]) -> Tokenizer {
    Tokenizer::new(Vocabulary::from_pieces(kind, WORD_BEGIN, pieces.iter().copied()).unwrap())
}

/// ASR side: ids 4 = ▁a, 5 = ▁b, 6 = b.
pub fn tiny_asr() -> Tokenizer {
    tokenizer(VocabKind::Asr, &["▁a", "▁b", "b"])
}

/// LM side with different pieces: ▁a, ▁b, ▁ab, ▁bb, b, a.
pub fn tiny_lm_tok() -> Tokenizer {
    tokenizer(VocabKind::Lm, &["▁a", "▁b", "▁ab", "▁bb", "b", "a"])
}

pub fn tiny_lm(tok: &Tokenizer) -> NGramModel {
    let text = ["a ab b", "ab ab a", "b a", "a a bb", "bb ab", "a b ab bb"];
    let corpus: Vec<_> = text.iter().map(|l| tok.encode(l)).collect();
    train_ngram(&corpus, tok.vocab(), 3, 0.4).unwrap()
}

/// Random normalized emissions; `sharp` scales the logits.
pub fn random_emissions(frames: usize, vocab: usize, sharp: f64, rng: &mut ChaCha8Rng) -> EmissionMatrix {
    let logits = (0..frames * vocab).map(|_| sharp * rng.random_range(-1.0..1.0)).collect();
    EmissionMatrix::from_logits(frames, vocab, logits).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// From-scratch LM score of a full ASR hypothesis (no `<s>`/`</s>`) with `</s>`.
pub fn scratch_lm_score(lm: &dyn LmScorer, retok: &Retokenizer<'_>, asr_tokens: &[TokenId]) -> f64 {
    let mut seq = vec![BOS];
    seq.extend(retok.full(asr_tokens).lm_tokens);
    seq.push(EOS);
    lm.score_sequence(&seq).unwrap()
}

/// Every sequence over `labels` of length at most `max_len`.
pub fn all_sequences(labels: &[TokenId], max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &l in labels {
                let mut t: Vec<TokenId> = s.clone();
                t.push(l);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

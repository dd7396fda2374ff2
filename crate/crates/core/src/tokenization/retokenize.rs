use super::tokenizer::{strip_bos, Tokenizer};
use super::vocab::{TokenId, EOS};
use super::TokenizerError;

/// Complete-word prefix of an ASR hypothesis mapped into LM tokens.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RetokenizedPrefix {
    /// ASR tokens consumed (a leading `<s>` is not counted).
    pub source_len: usize,
    pub lm_tokens: Vec<TokenId>,
    pub text: String,
}

/// Maps ASR token sequences onto an LM vocabulary.
///
/// When both sides share one inventory the mapping is the identity on ids.
#[derive(Clone, Copy, Debug)]
pub struct Retokenizer<'a> {
    asr: &'a Tokenizer,
    lm: &'a Tokenizer,
    identity: bool,
}

impl<'a> Retokenizer<'a> {
    pub fn new(asr: &'a Tokenizer, lm: &'a Tokenizer) -> Self {
        let identity = asr.vocab().same_pieces(lm.vocab());
        Self { asr, lm, identity }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn asr(&self) -> &'a Tokenizer {
        self.asr
    }

    pub fn lm(&self) -> &'a Tokenizer {
        self.lm
    }

    /// Re-tokenizes the longest complete-word prefix of `ids`.
    pub fn prefix(&self, ids: &[TokenId]) -> RetokenizedPrefix {
        let body = strip_bos(ids);
        let source_len = self.asr.tokenizable_prefix_len(body);
        self.convert(&body[..source_len], source_len)
    }

    /// Re-tokenizes every word of `ids`, including a trailing incomplete one.
    /// `<s>` and `</s>` are dropped.
    pub fn full(&self, ids: &[TokenId]) -> RetokenizedPrefix {
        let body = strip_bos(ids);
        let end = body.iter().position(|&id| id == EOS).unwrap_or(body.len());
        self.convert(&body[..end], end)
    }

    fn convert(&self, words: &[TokenId], source_len: usize) -> RetokenizedPrefix {
        // ids out of the ASR range are a caller bug; decode them as nothing
        let text = self
            .asr
            .decode_normalized(words)
            .unwrap_or_else(|_| String::new());
        let lm_tokens = if self.identity {
            words.to_vec()
        } else {
            self.lm.encode(&text)
        };
        RetokenizedPrefix {
            source_len,
            lm_tokens,
            text,
        }
    }
}

pub fn retokenize_prefix(ids: &[TokenId], asr_tok: &Tokenizer, lm_tok: &Tokenizer) -> RetokenizedPrefix {
    Retokenizer::new(asr_tok, lm_tok).prefix(ids)
}

/// φ: the shortest re-tokenized prefix length over a set of hypotheses.
pub fn shortest_retokenized_len<H: AsRef<[TokenId]>>(
    hyps: &[H],
    asr_tok: &Tokenizer,
    lm_tok: &Tokenizer,
) -> Result<usize, TokenizerError> {
    let retok = Retokenizer::new(asr_tok, lm_tok);
    hyps.iter()
        .map(|h| retok.prefix(h.as_ref()).lm_tokens.len())
        .min()
        .ok_or(TokenizerError::EmptyHypotheses)
}

#[cfg(test)]
mod tests {
    use super::super::vocab::{VocabKind, Vocabulary, BOS, WORD_BEGIN};
    use super::*;

    fn tok(kind: VocabKind, pieces: &[&str]) -> Tokenizer {
        Tokenizer::new(Vocabulary::from_pieces(kind, WORD_BEGIN, pieces.iter().copied()).unwrap())
    }

    fn pair() -> (Tokenizer, Tokenizer) {
        let asr = tok(
            VocabKind::Asr,
            &["▁", "▁h", "h", "▁e", "e", "▁l", "l", "▁o", "o", "▁w", "w", "▁he", "llo", "▁wor", "ld"],
        );
        let lm = tok(
            VocabKind::Lm,
            &["▁", "▁h", "h", "▁e", "e", "▁l", "l", "▁o", "o", "▁w", "w", "▁hello", "▁world", "r", "d"],
        );
        (asr, lm)
    }

    #[test]
    fn empty_input() {
        let (asr, lm) = pair();
        assert_eq!(retokenize_prefix(&[], &asr, &lm), RetokenizedPrefix::default());
        assert_eq!(retokenize_prefix(&[BOS], &asr, &lm), RetokenizedPrefix::default());
    }

    #[test]
    fn completed_word_is_mapped_to_lm_pieces() {
        let (asr, lm) = pair();
        let ids = asr.encode("hello wor");
        assert_eq!(ids.len(), 3);
        let r = retokenize_prefix(&ids, &asr, &lm);
        assert_eq!(r.source_len, 2);
        assert_eq!(r.text, "hello");
        assert_eq!(r.lm_tokens, vec![lm.vocab().id("▁hello").unwrap()]);

        let full = Retokenizer::new(&asr, &lm).full(&ids);
        assert_eq!(full.text, "hello wor");
        assert_eq!(full.lm_tokens, lm.encode("hello wor"));
    }

    #[test]
    fn identical_tokenizers_are_identity() {
        let (asr, _) = pair();
        let lm = Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm));
        let ids = asr.encode("hello wor");
        let r = retokenize_prefix(&ids, &asr, &lm);
        assert_eq!(r.lm_tokens, ids[..2].to_vec());
        assert!(Retokenizer::new(&asr, &lm).is_identity());
    }

    #[test]
    fn shortest_len() {
        let (asr, lm) = pair();
        let empty: Vec<Vec<TokenId>> = vec![];
        assert!(matches!(
            shortest_retokenized_len(&empty, &asr, &lm),
            Err(TokenizerError::EmptyHypotheses)
        ));
        assert_eq!(shortest_retokenized_len(&[vec![BOS]], &asr, &lm).unwrap(), 0);
        let hyps = vec![asr.encode("hello world w"), asr.encode("hello w")];
        assert_eq!(shortest_retokenized_len(&hyps, &asr, &lm).unwrap(), 1);
    }
}

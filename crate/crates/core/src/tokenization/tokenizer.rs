use super::vocab::{TokenId, Vocabulary, BOS, EOS, UNK};
use super::TokenizerError;

/// Greedy longest-match wordpiece tokenizer.
///
/// The first piece of every word carries the word-begin marker. A word whose
/// first character is outside the alphabet starts with the bare marker piece
/// followed by `<unk>`, so word boundaries stay visible in the token stream.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    vocab: Vocabulary,
    max_piece_chars: usize,
    bare_marker: Option<TokenId>,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary) -> Self {
        let marker = vocab.marker();
        let max_piece_chars = vocab
            .tokens()
            .iter()
            .map(|t| t.chars().filter(|&c| c != marker).count())
            .max()
            .unwrap_or(1)
            .max(1);
        let bare_marker = vocab.id(&marker.to_string());
        Self {
            vocab,
            max_piece_chars,
            bare_marker,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            self.encode_word(word, &mut out);
        }
        out
    }

    fn encode_word(&self, word: &str, out: &mut Vec<TokenId>) {
        let marker = self.vocab.marker();
        let chars: Vec<char> = word.chars().collect();
        let mut buf = String::new();
        let mut pos = 0;

        let longest = (1..=self.max_piece_chars.min(chars.len())).rev().find_map(|len| {
            buf.clear();
            buf.push(marker);
            buf.extend(&chars[..len]);
            self.vocab.id(&buf).map(|id| (id, len))
        });
        match longest {
            Some((id, len)) => {
                out.push(id);
                pos = len;
            }
            None => out.push(self.bare_marker.unwrap_or(UNK)),
        }

        while pos < chars.len() {
            if chars[pos] == marker {
                out.push(UNK);
                pos += 1;
                continue;
            }
            let max = self.max_piece_chars.min(chars.len() - pos);
            let found = (1..=max).rev().find_map(|len| {
                buf.clear();
                buf.extend(&chars[pos..pos + len]);
                self.vocab.id(&buf).map(|id| (id, len))
            });
            match found {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    out.push(UNK);
                    pos += 1;
                }
            }
        }
    }

    /// Concatenates pieces, turning each marker into a space. Specials are skipped.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let marker = self.vocab.marker();
        let mut out = String::new();
        for &id in ids {
            let tok = self.vocab.token(id).ok_or(TokenizerError::InvalidId(id))?;
            if self.vocab.is_special(id) {
                continue;
            }
            out.extend(tok.chars().map(|c| if c == marker { ' ' } else { c }));
        }
        Ok(out.trim_start().to_string())
    }

    /// Decodes and collapses whitespace runs.
    pub fn decode_normalized(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        Ok(normalize_whitespace(&self.decode(ids)?))
    }

    /// Word boundary: a marked token or `</s>` closes the word before it.
    pub fn is_boundary(&self, id: TokenId) -> bool {
        id == EOS || self.vocab.is_word_begin(id)
    }

    /// Length of the longest prefix (not counting a leading `<s>`) made of
    /// complete words, i.e. followed by a word-begin token.
    pub fn tokenizable_prefix_len(&self, ids: &[TokenId]) -> usize {
        let body = strip_bos(ids);
        (1..body.len())
            .rev()
            .find(|&j| self.is_boundary(body[j]))
            .unwrap_or(0)
    }
}

pub(crate) fn strip_bos(ids: &[TokenId]) -> &[TokenId] {
    match ids.first() {
        Some(&BOS) => &ids[1..],
        _ => ids,
    }
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

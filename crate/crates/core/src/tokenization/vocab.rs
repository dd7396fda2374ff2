use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use super::TokenizerError;

pub type TokenId = u32;

/// CTC blank. Only meaningful in ASR-side vocabularies.
pub const BLANK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const NUM_SPECIAL: usize = 4;

/// SentencePiece-style word-begin marker (U+2581).
pub const WORD_BEGIN: char = '\u{2581}';

const BLANK_STR: &str = "<blank>";
const LM_PLACEHOLDER_STR: &str = "<pad>";
const BOS_STR: &str = "<s>";
const EOS_STR: &str = "</s>";
const UNK_STR: &str = "<unk>";

/// Which side of the decoder a vocabulary belongs to.
///
/// ASR vocabularies carry the CTC blank on id 0, LM vocabularies a
/// placeholder that is never produced or predicted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabKind {
    Asr,
    Lm,
}

impl VocabKind {
    fn slot_zero(self) -> &'static str {
        match self {
            VocabKind::Asr => BLANK_STR,
            VocabKind::Lm => LM_PLACEHOLDER_STR,
        }
    }
}

/// Dense wordpiece inventory. Ids `0..NUM_SPECIAL` are the fixed specials.
#[derive(Clone, PartialEq)]
pub struct Vocabulary {
    kind: VocabKind,
    marker: char,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    word_begin: Vec<bool>,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("kind", &self.kind)
            .field("len", &self.tokens.len())
            .finish()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from the non-special pieces, in id order.
    pub fn from_pieces<I, S>(kind: VocabKind, marker: char, pieces: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = vec![
            kind.slot_zero().to_string(),
            BOS_STR.to_string(),
            EOS_STR.to_string(),
            UNK_STR.to_string(),
        ];
        tokens.extend(pieces.into_iter().map(Into::into));
        Self::from_tokens(kind, marker, tokens)
    }

    fn from_tokens(kind: VocabKind, marker: char, tokens: Vec<String>) -> Result<Self, TokenizerError> {
        if tokens.len() < NUM_SPECIAL {
            return Err(TokenizerError::MalformedVocab(
                "fewer lines than special tokens".into(),
            ));
        }
        let expected = [kind.slot_zero(), BOS_STR, EOS_STR, UNK_STR];
        for (i, want) in expected.iter().enumerate() {
            if tokens[i] != *want {
                return Err(TokenizerError::MalformedVocab(format!(
                    "line {} must be {want:?}, found {:?}",
                    i + 1,
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        let mut word_begin = Vec::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(TokenizerError::MalformedVocab(format!(
                    "token {id} is empty or contains whitespace"
                )));
            }
            if id >= NUM_SPECIAL && tok.chars().skip(1).any(|c| c == marker) {
                return Err(TokenizerError::MarkerMidToken(tok.clone()));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(TokenizerError::DuplicateToken(tok.clone()));
            }
            word_begin.push(id >= NUM_SPECIAL && tok.starts_with(marker));
        }
        Ok(Self {
            kind,
            marker,
            tokens,
            index,
            word_begin,
        })
    }

    /// Parses the line-per-token file format. The kind is inferred from line 1.
    pub fn parse(text: &str) -> Result<Self, TokenizerError> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let kind = match tokens.first().map(String::as_str) {
            Some(BLANK_STR) => VocabKind::Asr,
            Some(LM_PLACEHOLDER_STR) => VocabKind::Lm,
            other => {
                return Err(TokenizerError::MalformedVocab(format!(
                    "line 1 must be {BLANK_STR:?} or {LM_PLACEHOLDER_STR:?}, found {other:?}"
                )))
            }
        };
        Self::from_tokens(kind, WORD_BEGIN, tokens)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    /// The same inventory re-labelled for the other side (blank vs. placeholder).
    pub fn with_kind(&self, kind: VocabKind) -> Self {
        let mut out = self.clone();
        out.kind = kind;
        out.tokens[0] = kind.slot_zero().to_string();
        out.index.remove(self.kind.slot_zero());
        out.index.insert(kind.slot_zero().to_string(), 0);
        out
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < NUM_SPECIAL
    }

    pub fn is_word_begin(&self, id: TokenId) -> bool {
        self.word_begin.get(id as usize).copied().unwrap_or(false)
    }

    /// Ids of every non-special token.
    pub fn regular_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (NUM_SPECIAL as TokenId)..(self.tokens.len() as TokenId)
    }

    /// True when both inventories assign the same id to every non-placeholder token.
    pub fn same_pieces(&self, other: &Vocabulary) -> bool {
        self.marker == other.marker && self.tokens[1..] == other.tokens[1..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vocabulary {
        Vocabulary::from_pieces(VocabKind::Asr, WORD_BEGIN, ["▁a", "b", "▁ab"]).unwrap()
    }

    #[test]
    fn specials_occupy_first_ids() {
        let v = small();
        assert_eq!(v.token(BLANK), Some("<blank>"));
        assert_eq!(v.token(BOS), Some("<s>"));
        assert_eq!(v.token(EOS), Some("</s>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
        assert_eq!(v.id("▁ab"), Some(6));
        assert!(v.is_word_begin(4));
        assert!(!v.is_word_begin(5));
        assert!(!v.is_word_begin(BOS));
    }

    #[test]
    fn file_round_trip_preserves_kind() {
        let v = small();
        let back = Vocabulary::parse(&v.to_file_string()).unwrap();
        assert_eq!(back, v);
        let lm = v.with_kind(VocabKind::Lm);
        let text = lm.to_file_string();
        assert!(text.starts_with("<pad>\n"));
        let back = Vocabulary::parse(&text).unwrap();
        assert_eq!(back.kind(), VocabKind::Lm);
        assert!(back.same_pieces(&v));
    }

    #[test]
    fn rejects_duplicates_and_mid_markers() {
        let dup = Vocabulary::from_pieces(VocabKind::Asr, WORD_BEGIN, ["a", "a"]);
        assert!(matches!(dup, Err(TokenizerError::DuplicateToken(_))));
        let mid = Vocabulary::from_pieces(VocabKind::Asr, WORD_BEGIN, ["a▁b"]);
        assert!(matches!(mid, Err(TokenizerError::MarkerMidToken(_))));
    }

    #[test]
    fn rejects_bad_header() {
        assert!(Vocabulary::parse("<s>\n<s>\n</s>\n<unk>\n").is_err());
        assert!(Vocabulary::parse("<blank>\n<s>\n").is_err());
        assert!(Vocabulary::parse("<blank>\n</s>\n<s>\n<unk>\n").is_err());
    }
}

//! Wordpiece vocabularies, greedy tokenization, word-boundary detection and
//! re-tokenization of ASR hypotheses into LM tokens.

mod build;
mod retokenize;
mod tokenizer;
mod vocab;

pub use build::{build_vocab, MAX_PIECE_CHARS};
pub use retokenize::{retokenize_prefix, shortest_retokenized_len, RetokenizedPrefix, Retokenizer};
pub use tokenizer::{normalize_whitespace, Tokenizer};
pub use vocab::{TokenId, VocabKind, Vocabulary, BLANK, BOS, EOS, NUM_SPECIAL, UNK, WORD_BEGIN};

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("corpus contains no words")]
    EmptyCorpus,
    #[error("target size {target} cannot hold the alphabet and specials ({required} needed)")]
    TargetTooSmall { target: usize, required: usize },
    #[error("token id {0} is out of range")]
    InvalidId(TokenId),
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("word-begin marker inside token {0:?}")]
    MarkerMidToken(String),
    #[error("malformed vocabulary: {0}")]
    MalformedVocab(String),
    #[error("no hypotheses given")]
    EmptyHypotheses,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::vocab::{VocabKind, Vocabulary, NUM_SPECIAL};
use super::TokenizerError;

/// Longest multi-character piece considered, in characters (marker excluded).
pub const MAX_PIECE_CHARS: usize = 8;

/// Builds a wordpiece inventory from whitespace-delimited text.
///
/// The inventory always contains the bare marker, every alphabet character
/// in marked and unmarked form, and then the most frequent multi-character
/// pieces (word-initial pieces are counted in marked form). Ties are broken
/// lexicographically so the result depends only on the input.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[S],
    target_size: usize,
    marker: char,
    kind: VocabKind,
) -> Result<Vocabulary, TokenizerError> {
    let mut word_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            *word_counts.entry(word).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let alphabet: BTreeSet<char> = word_counts
        .keys()
        .flat_map(|w| w.chars())
        .filter(|&c| c != marker)
        .collect();
    let required = NUM_SPECIAL + 1 + 2 * alphabet.len();
    if target_size < required {
        return Err(TokenizerError::TargetTooSmall {
            target: target_size,
            required,
        });
    }

    let mut pieces: Vec<String> = Vec::with_capacity(target_size - NUM_SPECIAL);
    pieces.push(marker.to_string());
    for &c in &alphabet {
        pieces.push(format!("{marker}{c}"));
        pieces.push(c.to_string());
    }

    let mut candidates: HashMap<String, u64> = HashMap::new();
    for (word, &count) in &word_counts {
        let chars: Vec<char> = word.chars().collect();
        if chars.contains(&marker) {
            continue;
        }
        let n = chars.len();
        for len in 2..=n.min(MAX_PIECE_CHARS) {
            let mut piece = String::with_capacity(len * 4 + 3);
            piece.push(marker);
            piece.extend(&chars[..len]);
            *candidates.entry(piece).or_default() += count;
        }
        for start in 1..n {
            for end in (start + 2)..=n.min(start + MAX_PIECE_CHARS) {
                let piece: String = chars[start..end].iter().collect();
                *candidates.entry(piece).or_default() += count;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = candidates.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let room = target_size - NUM_SPECIAL - pieces.len();
    pieces.extend(ranked.into_iter().take(room).map(|(p, _)| p));

    Vocabulary::from_pieces(kind, marker, pieces)
}

//! Seeded synthetic English-like text.
//!
//! Words are built from consonant-vowel syllables and grouped into a few
//! syntactic classes; sentences follow a small set of class templates with
//! Zipfian word choice, so an n-gram model trained on the text has real
//! structure to exploit.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "st", "tr", "pl", "sh",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "t", "l"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    Det,
    Adj,
    Noun,
    Verb,
    Prep,
    Adv,
}

const CLASS_SIZES: &[(Class, usize)] = &[
    (Class::Det, 6),
    (Class::Adj, 40),
    (Class::Noun, 90),
    (Class::Verb, 60),
    (Class::Prep, 8),
    (Class::Adv, 20),
];

use Class::*;
const TEMPLATES: &[&[Class]] = &[
    &[Det, Noun, Verb, Det, Noun],
    &[Det, Adj, Noun, Verb, Det, Noun],
    &[Det, Noun, Verb, Prep, Det, Noun],
    &[Det, Adj, Noun, Verb, Adv],
    &[Det, Noun, Adv, Verb, Det, Adj, Noun],
    &[Det, Noun, Verb, Det, Noun, Prep, Det, Noun],
    &[Noun, Verb, Det, Adj, Noun],
];

struct Lexicon {
    words: Vec<(Class, Vec<String>, WeightedIndex<f64>)>,
}

impl Lexicon {
    fn generate(rng: &mut ChaCha8Rng) -> Self {
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for &(class, size) in CLASS_SIZES {
            let syllables = match class {
                Det | Prep => 1..=1,
                Adv => 2..=3,
                _ => 1..=3,
            };
            let mut list = Vec::with_capacity(size);
            while list.len() < size {
                let n = rng.random_range(syllables.clone());
                let mut w = String::new();
                for _ in 0..n {
                    w.push_str(ONSETS.choose(rng).expect("non-empty"));
                    w.push_str(VOWELS.choose(rng).expect("non-empty"));
                }
                w.push_str(CODAS.choose(rng).expect("non-empty"));
                if seen.insert(w.clone()) {
                    list.push(w);
                }
            }
            // Zipf weights over the class
            let weights: Vec<f64> = (1..=size).map(|r| 1.0 / r as f64).collect();
            let dist = WeightedIndex::new(weights).expect("positive weights");
            words.push((class, list, dist));
        }
        Self { words }
    }

    fn sample(&self, class: Class, rng: &mut ChaCha8Rng) -> &str {
        let (_, list, dist) = self.words.iter().find(|(c, _, _)| *c == class).expect("every class has words");
        &list[dist.sample(rng)]
    }
}

/// `sentences` lines of synthetic text, deterministic in `seed`.
pub fn generate_corpus(sentences: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::generate(&mut rng);
    (0..sentences)
        .map(|_| {
            let template = TEMPLATES.choose(&mut rng).expect("non-empty");
            template
                .iter()
                .map(|&class| lexicon.sample(class, &mut rng))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Splits `lines` into (train, eval) with about `eval_fraction` of the
/// distinct sentences held out. No eval sentence occurs in train.
pub fn split_corpus(
    lines: &[String],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), HarnessError> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(HarnessError::Config(format!("eval fraction {eval_fraction} outside [0, 1)")));
    }
    let mut distinct: Vec<&String> = Vec::new();
    let mut seen = HashSet::new();
    for l in lines {
        if !l.trim().is_empty() && seen.insert(l.as_str()) {
            distinct.push(l);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let n_eval = (distinct.len() as f64 * eval_fraction).round() as usize;
    let held: HashSet<&str> = distinct[..n_eval].iter().map(|s| s.as_str()).collect();
    let eval = distinct[..n_eval].iter().map(|s| (*s).clone()).collect();
    let train = lines
        .iter()
        .filter(|l| !l.trim().is_empty() && !held.contains(l.as_str()))
        .cloned()
        .collect();
    Ok((train, eval))
}

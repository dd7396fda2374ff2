use std::collections::HashMap;
use std::fmt;

use super::{hash_step, AtomicCounters, LmError, LmScorer, PrefixCacheEntry, ScoreRequest, ScoreResult, ScorerCounters};
use crate::tokenization::{TokenId, Vocabulary, BLANK, BOS, EOS};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.4;
pub const MAX_ORDER: usize = 5;

/// Natural-log stand-in for ARPA's conventional `-99` on `<s>`.
pub(super) const BOS_LOGPROB: f64 = -99.0 * std::f64::consts::LN_10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(super) struct Entry {
    pub logprob: f64,
    /// 0.0 when the n-gram is never used as a context.
    pub backoff: f64,
}

/// Backoff n-gram model over an LM vocabulary.
///
/// Trained with interpolated absolute discounting and stored in backoff form:
/// explicit n-grams carry their interpolated probability, every context
/// carries the interpolation weight as its backoff, and unigrams fall back to
/// a uniform floor over the predictable tokens.
pub struct NGramModel {
    order: usize,
    discount: Option<f64>,
    vocab: Vocabulary,
    /// `tables[k - 1]` holds the k-grams.
    pub(super) tables: Vec<HashMap<Vec<TokenId>, Entry>>,
    counters: AtomicCounters,
}

impl fmt::Debug for NGramModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NGramModel")
            .field("order", &self.order)
            .field("discount", &self.discount)
            .field("vocab", &self.vocab)
            .field("ngrams", &self.tables.iter().map(HashMap::len).collect::<Vec<_>>())
            .finish()
    }
}

impl Clone for NGramModel {
    fn clone(&self) -> Self {
        Self {
            order: self.order,
            discount: self.discount,
            vocab: self.vocab.clone(),
            tables: self.tables.clone(),
            counters: AtomicCounters::default(),
        }
    }
}

/// Number of tokens a model can predict: everything but slot 0 and `<s>`.
fn predictable_count(vocab: &Vocabulary) -> usize {
    vocab.len().saturating_sub(2).max(1)
}

fn is_predictable(vocab: &Vocabulary, id: TokenId) -> bool {
    (id as usize) < vocab.len() && id != BLANK && id != BOS
}

/// Trains a backoff model on sentences of LM token ids (without `<s>`/`</s>`).
pub fn train_ngram(
    corpus: &[Vec<TokenId>],
    vocab: &Vocabulary,
    order: usize,
    discount: f64,
) -> Result<NGramModel, LmError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(LmError::InvalidOrder(order));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(LmError::InvalidDiscount(discount));
    }
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }

    let mut counts: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); order];
    let mut seq = Vec::new();
    for sentence in corpus {
        seq.clear();
        seq.push(BOS);
        for &tok in sentence {
            if !is_predictable(vocab, tok) || tok == EOS {
                return Err(LmError::InvalidToken(tok));
            }
            seq.push(tok);
        }
        seq.push(EOS);
        for i in 1..seq.len() {
            for k in 1..=order.min(i + 1) {
                *counts[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_default() += 1;
            }
        }
    }

    let predictable = predictable_count(vocab);
    let floor = 1.0 / predictable as f64;
    let mut model = NGramModel {
        order,
        discount: Some(discount),
        vocab: vocab.clone(),
        tables: vec![HashMap::new(); order],
        counters: AtomicCounters::default(),
    };

    // unigrams: discounted counts interpolated with the uniform floor
    let total: u64 = counts[0].values().sum();
    let gamma = discount * counts[0].len() as f64 / total as f64;
    for id in 0..vocab.len() as TokenId {
        if !is_predictable(vocab, id) {
            continue;
        }
        let c = counts[0].get(&[id][..]).copied().unwrap_or(0) as f64;
        let p = (c - discount).max(0.0) / total as f64 + gamma * floor;
        model.tables[0].insert(vec![id], Entry { logprob: p.ln(), backoff: 0.0 });
    }
    if order > 1 {
        model.tables[0].insert(vec![BOS], Entry { logprob: BOS_LOGPROB, backoff: 0.0 });
    }

    for k in 2..=order {
        let mut by_context: HashMap<&[TokenId], (u64, u64)> = HashMap::new();
        for (gram, &c) in &counts[k - 1] {
            let slot = by_context.entry(&gram[..k - 1]).or_default();
            slot.0 += c;
            slot.1 += 1;
        }
        let mut new_entries = HashMap::with_capacity(counts[k - 1].len());
        for (gram, &c) in &counts[k - 1] {
            let ctx = &gram[..k - 1];
            let (ctx_total, distinct) = by_context[ctx];
            let gamma = discount * distinct as f64 / ctx_total as f64;
            let lower = model.cond_logprob(&gram[1..k - 1], gram[k - 1]).exp();
            let p = (c as f64 - discount) / ctx_total as f64 + gamma * lower;
            new_entries.insert(gram.clone(), Entry { logprob: p.ln(), backoff: 0.0 });
        }
        for (ctx, (ctx_total, distinct)) in by_context {
            let gamma = discount * distinct as f64 / ctx_total as f64;
            let entry = model.tables[k - 2]
                .get_mut(ctx)
                .expect("every context is itself a stored n-gram");
            entry.backoff = gamma.ln();
        }
        model.tables[k - 1] = new_entries;
    }
    Ok(model)
}

impl NGramModel {
    pub(super) fn from_tables(
        order: usize,
        vocab: Vocabulary,
        tables: Vec<HashMap<Vec<TokenId>, Entry>>,
    ) -> Self {
        Self {
            order,
            discount: None,
            vocab,
            tables,
            counters: AtomicCounters::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `None` for models read from ARPA.
    pub fn discount(&self) -> Option<f64> {
        self.discount
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_ngrams(&self, k: usize) -> usize {
        self.tables.get(k.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    /// Uniform floor at the end of every backoff chain.
    pub fn floor_logprob(&self) -> f64 {
        -(predictable_count(&self.vocab) as f64).ln()
    }

    /// Tokens that can follow a context (everything but slot 0 and `<s>`).
    pub fn predictable_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.vocab.len() as TokenId).filter(|&id| is_predictable(&self.vocab, id))
    }

    /// `ln P(token | history)`; only the last `order - 1` history tokens matter.
    pub fn cond_logprob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let keep = (self.order - 1).min(history.len());
        let hist = &history[history.len() - keep..];
        let mut key = [0 as TokenId; MAX_ORDER];
        key[..keep].copy_from_slice(hist);
        key[keep] = token;

        let mut backoff = 0.0;
        for start in 0..=keep {
            let ctx_len = keep - start;
            if let Some(e) = self.tables[ctx_len].get(&key[start..=keep]) {
                return backoff + e.logprob;
            }
            if ctx_len > 0 {
                if let Some(c) = self.tables[ctx_len - 1].get(&key[start..keep]) {
                    backoff += c.backoff;
                }
            }
        }
        backoff + self.floor_logprob()
    }

    fn check_token(&self, token: TokenId) -> Result<(), LmError> {
        if is_predictable(&self.vocab, token) {
            Ok(())
        } else {
            Err(LmError::InvalidToken(token))
        }
    }

    fn push_history(&self, history: &mut Vec<TokenId>, token: TokenId) {
        history.push(token);
        let keep = self.order - 1;
        if history.len() > keep {
            history.drain(..history.len() - keep);
        }
    }
}

impl LmScorer for NGramModel {
    fn score_sequence(&self, seq: &[TokenId]) -> Result<f64, LmError> {
        if seq.first() != Some(&BOS) {
            return Err(LmError::MissingBos);
        }
        let mut total = 0.0;
        for i in 1..seq.len() {
            self.check_token(seq[i])?;
            total += self.cond_logprob(&seq[..i], seq[i]);
        }
        Ok(total)
    }

    fn score_batch_incremental(&self, batch: &[ScoreRequest<'_>]) -> Result<Vec<ScoreResult>, LmError> {
        let mut results = Vec::with_capacity(batch.len());
        let mut hyps = 0u64;
        let mut tokens = 0u64;
        for (index, req) in batch.iter().enumerate() {
            let cache = req.cache;
            if !cache.is_prefix_of(req.tokens) {
                return Err(LmError::CacheMismatch {
                    index,
                    scored_len: cache.scored_len,
                });
            }
            let mut history = if cache.scored_len == 0 {
                let mut h = vec![BOS];
                h.truncate(self.order - 1);
                h
            } else {
                cache.context.clone()
            };
            let mut cum = cache.cum_logprob;
            let mut hash = cache.prefix_hash;
            let suffix = &req.tokens[cache.scored_len..];
            for &tok in suffix {
                self.check_token(tok)?;
                cum += self.cond_logprob(&history, tok);
                self.push_history(&mut history, tok);
                hash = hash_step(hash, tok);
            }
            if !suffix.is_empty() {
                hyps += 1;
                tokens += suffix.len() as u64;
            }
            results.push(ScoreResult {
                cum_logprob: cum,
                cache: PrefixCacheEntry {
                    scored_len: req.tokens.len(),
                    cum_logprob: cum,
                    context: history,
                    prefix_hash: hash,
                },
                new_tokens: suffix.len(),
            });
        }
        self.counters.record(hyps, tokens);
        Ok(results)
    }

    fn counters(&self) -> ScorerCounters {
        self.counters.snapshot()
    }

    fn reset(&self) {
        self.counters.reset();
    }
}

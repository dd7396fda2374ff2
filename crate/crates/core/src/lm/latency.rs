use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::{LmError, LmScorer, ScoreRequest, ScoreResult, ScorerCounters};
use crate::tokenization::TokenId;

/// Delegating scorer that sleeps to emulate inference cost:
/// `per_call + per_token * tokens_scored` for every batch call.
#[derive(Debug)]
pub struct LatencyScorer<S> {
    inner: S,
    per_call: Duration,
    per_token: Duration,
    emulated_nanos: AtomicU64,
}

pub fn wrap_with_latency<S: LmScorer>(inner: S, per_call: Duration, per_token: Duration) -> LatencyScorer<S> {
    LatencyScorer {
        inner,
        per_call,
        per_token,
        emulated_nanos: AtomicU64::new(0),
    }
}

impl<S> LatencyScorer<S> {
    pub fn inner(&self) -> &S {
        &self.inner
    }

    /// Builds from millisecond costs (the unit used in configuration files).
    pub fn from_millis(inner: S, per_call_ms: f64, per_token_ms: f64) -> Self
    where
        S: LmScorer,
    {
        wrap_with_latency(
            inner,
            Duration::from_secs_f64(per_call_ms.max(0.0) / 1e3),
            Duration::from_secs_f64(per_token_ms.max(0.0) / 1e3),
        )
    }
}

impl<S: LmScorer> LmScorer for LatencyScorer<S> {
    fn score_sequence(&self, seq: &[TokenId]) -> Result<f64, LmError> {
        self.inner.score_sequence(seq)
    }

    fn score_batch_incremental(&self, batch: &[ScoreRequest<'_>]) -> Result<Vec<ScoreResult>, LmError> {
        let results = self.inner.score_batch_incremental(batch)?;
        let tokens: u32 = results.iter().map(|r| r.new_tokens as u32).sum();
        let cost = self.per_call + self.per_token * tokens;
        if !cost.is_zero() {
            std::thread::sleep(cost);
            self.emulated_nanos.fetch_add(cost.as_nanos() as u64, Ordering::Relaxed);
        }
        Ok(results)
    }

    fn counters(&self) -> ScorerCounters {
        self.inner.counters()
    }

    fn reset(&self) {
        self.inner.reset();
        self.emulated_nanos.store(0, Ordering::Relaxed);
    }

    fn emulated_cost(&self) -> Duration {
        Duration::from_nanos(self.emulated_nanos.load(Ordering::Relaxed)) + self.inner.emulated_cost()
    }
}

//! Exact CTC references: path enumeration and the forward algorithm.
//!
//! Enumeration walks only alignment paths whose collapse stays consistent
//! with the target, so it remains exact while skipping paths that cannot
//! contribute.

use super::{AcousticError, EmissionMatrix};
use crate::numeric::{log_add, log_sum_exp, LOG_ZERO};
use crate::tokenization::{TokenId, BLANK};

pub const MAX_ORACLE_FRAMES: usize = 12;
pub const MAX_ORACLE_VOCAB: usize = 8;

fn check_size(em: &EmissionMatrix) -> Result<(), AcousticError> {
    if em.num_frames() > MAX_ORACLE_FRAMES || em.vocab_size() > MAX_ORACLE_VOCAB {
        return Err(AcousticError::TooLarge {
            frames: em.num_frames(),
            vocab: em.vocab_size(),
        });
    }
    Ok(())
}

fn check_labels(em: &EmissionMatrix, labels: &[TokenId]) -> Result<(), AcousticError> {
    match labels.iter().find(|&&l| l == BLANK || l as usize >= em.vocab_size()) {
        Some(&bad) => Err(AcousticError::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// `ln P(labels)`: sum over every length-T path collapsing exactly to `labels`.
pub fn brute_force_ctc(em: &EmissionMatrix, labels: &[TokenId]) -> Result<f64, AcousticError> {
    check_size(em)?;
    check_labels(em, labels)?;
    let mut acc = LOG_ZERO;
    walk(em, labels, 0, 0, None, 0.0, false, &mut acc);
    Ok(acc)
}

/// `ln` of the total probability of paths whose collapse starts with `prefix`.
pub fn brute_force_ctc_prefix(em: &EmissionMatrix, prefix: &[TokenId]) -> Result<f64, AcousticError> {
    check_size(em)?;
    check_labels(em, prefix)?;
    let mut acc = LOG_ZERO;
    walk(em, prefix, 0, 0, None, 0.0, true, &mut acc);
    Ok(acc)
}

/// Depth-first path walk. `emitted` labels of `target` have been produced so
/// far and `prev` is the previous frame's symbol (None for blank/start).
#[allow(clippy::too_many_arguments)]
fn walk(
    em: &EmissionMatrix,
    target: &[TokenId],
    t: usize,
    emitted: usize,
    prev: Option<TokenId>,
    logp: f64,
    prefix_mode: bool,
    acc: &mut f64,
) {
    if prefix_mode && emitted == target.len() {
        // prefix complete: every continuation qualifies
        let tail: f64 = (t..em.num_frames()).map(|u| log_sum_exp(em.row(u))).sum();
        *acc = log_add(*acc, logp + tail);
        return;
    }
    if t == em.num_frames() {
        if emitted == target.len() {
            *acc = log_add(*acc, logp);
        }
        return;
    }
    let row = em.row(t);
    for sym in 0..em.vocab_size() as TokenId {
        let p = logp + row[sym as usize];
        if sym == BLANK {
            walk(em, target, t + 1, emitted, None, p, prefix_mode, acc);
        } else if prev == Some(sym) {
            walk(em, target, t + 1, emitted, prev, p, prefix_mode, acc);
        } else if emitted < target.len() && target[emitted] == sym {
            walk(em, target, t + 1, emitted + 1, Some(sym), p, prefix_mode, acc);
        }
    }
}

/// Forward algorithm over the blank-interleaved label sequence.
pub fn ctc_forward(em: &EmissionMatrix, labels: &[TokenId]) -> Result<f64, AcousticError> {
    check_labels(em, labels)?;
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(BLANK);
    for &l in labels {
        ext.push(l);
        ext.push(BLANK);
    }
    let s = ext.len();
    let mut alpha = vec![LOG_ZERO; s];
    let row = em.row(0);
    alpha[0] = row[BLANK as usize];
    if s > 1 {
        alpha[1] = row[ext[1] as usize];
    }
    let mut next = vec![LOG_ZERO; s];
    for t in 1..em.num_frames() {
        let row = em.row(t);
        for i in 0..s {
            let mut a = alpha[i];
            if i >= 1 {
                a = log_add(a, alpha[i - 1]);
            }
            if i >= 2 && ext[i] != BLANK && ext[i] != ext[i - 2] {
                a = log_add(a, alpha[i - 2]);
            }
            next[i] = a + row[ext[i] as usize];
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(if s > 1 { log_add(alpha[s - 1], alpha[s - 2]) } else { alpha[0] })
}

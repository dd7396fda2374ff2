use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AcousticError, EmissionMatrix};
use crate::tokenization::{TokenId, BLANK, NUM_SPECIAL};

/// Logit offset keeping `<s>`, `</s>` and `<unk>` out of the acoustic evidence.
const SPECIAL_PENALTY: f64 = 8.0;
const MIN_NOISE: f64 = 1e-6;

/// Shape of generated utterances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Inclusive range of frames spent on each reference token.
    pub frames_per_token: (usize, usize),
    /// Peak sharpness is `1 / noise`; 0 gives near one-hot rows.
    pub noise: f64,
    /// Probability of a blank frame between two different tokens. Repeated
    /// tokens are always separated by one.
    pub gap_prob: f64,
    /// One blank frame at both ends.
    pub edge_blanks: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames_per_token: (2, 4),
            noise: 0.5,
            gap_prob: 0.3,
            edge_blanks: true,
        }
    }
}

impl SynthConfig {
    /// One frame per token, no optional blanks.
    pub fn tight(noise: f64) -> Self {
        Self {
            frames_per_token: (1, 1),
            noise,
            gap_prob: 0.0,
            edge_blanks: false,
        }
    }
}

/// Frame-level target labels (blank included) for a reference.
fn alignment(reference: &[TokenId], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let (lo, hi) = cfg.frames_per_token;
    let mut frames = Vec::new();
    if cfg.edge_blanks {
        frames.push(BLANK);
    }
    for (i, &tok) in reference.iter().enumerate() {
        if i > 0 {
            let repeat = reference[i - 1] == tok;
            if repeat || (cfg.gap_prob > 0.0 && rng.random::<f64>() < cfg.gap_prob) {
                frames.push(BLANK);
            }
        }
        let dur = rng.random_range(lo..=hi);
        frames.extend(std::iter::repeat_n(tok, dur));
    }
    if cfg.edge_blanks {
        frames.push(BLANK);
    }
    frames
}

/// Generates emissions whose every frame peaks on its aligned target label,
/// with per-entry Gaussian perturbation. Deterministic in `seed`.
pub fn synth_emissions(
    reference: &[TokenId],
    vocab_size: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<EmissionMatrix, AcousticError> {
    if reference.is_empty() {
        return Err(AcousticError::EmptyReference);
    }
    let (lo, hi) = cfg.frames_per_token;
    if lo == 0 || lo > hi {
        return Err(AcousticError::InvalidRange { lo, hi });
    }
    if !(cfg.noise >= 0.0) || !(0.0..=1.0).contains(&cfg.gap_prob) {
        return Err(AcousticError::InvalidNoise(cfg.noise));
    }
    if let Some(&bad) = reference.iter().find(|&&t| t == BLANK || t as usize >= vocab_size) {
        return Err(AcousticError::InvalidLabel(bad));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = alignment(reference, cfg, &mut rng);
    let peak = 1.0 / cfg.noise.max(MIN_NOISE);
    let mut logits = Vec::with_capacity(targets.len() * vocab_size);
    for &target in &targets {
        for v in 0..vocab_size {
            let mut z: f64 = rng.sample(StandardNormal);
            if v > 0 && v < NUM_SPECIAL {
                z -= SPECIAL_PENALTY;
            }
            if v as TokenId == target {
                z += peak;
            }
            logits.push(z);
        }
    }
    EmissionMatrix::from_logits(targets.len(), vocab_size, logits)
}

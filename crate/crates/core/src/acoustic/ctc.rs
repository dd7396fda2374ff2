use super::AcousticError;
use crate::numeric::{log_add, LOG_ZERO};
use crate::tokenization::{TokenId, BLANK};

/// Log-probabilities of the alignment paths for one prefix, split by whether
/// the path ends in blank or in the prefix's last label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtcScorePair {
    pub blank: f64,
    pub nonblank: f64,
}

impl CtcScorePair {
    /// The empty prefix before any frame.
    pub const START: CtcScorePair = CtcScorePair { blank: 0.0, nonblank: LOG_ZERO };
    pub const ZERO: CtcScorePair = CtcScorePair { blank: LOG_ZERO, nonblank: LOG_ZERO };

    pub fn total(&self) -> f64 {
        log_add(self.blank, self.nonblank)
    }

    /// Combines two path sets for the same prefix.
    pub fn merge(&self, other: &CtcScorePair) -> CtcScorePair {
        CtcScorePair {
            blank: log_add(self.blank, other.blank),
            nonblank: log_add(self.nonblank, other.nonblank),
        }
    }
}

/// What the prefix does on the next frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtcStep {
    /// Same prefix: emit blank, or repeat the last label.
    Stay,
    /// Prefix grows by this label.
    Emit(TokenId),
}

/// One frame of the CTC prefix recursion.
pub fn ctc_step_extend(
    pair: CtcScorePair,
    frame: &[f64],
    last_label: Option<TokenId>,
    step: CtcStep,
) -> Result<CtcScorePair, AcousticError> {
    let check = |id: TokenId| {
        if id == BLANK || id as usize >= frame.len() {
            Err(AcousticError::InvalidLabel(id))
        } else {
            Ok(())
        }
    };
    if let Some(last) = last_label {
        check(last)?;
    }
    Ok(match step {
        CtcStep::Stay => CtcScorePair {
            blank: pair.total() + frame[BLANK as usize],
            nonblank: match last_label {
                Some(last) => pair.nonblank + frame[last as usize],
                None => LOG_ZERO,
            },
        },
        CtcStep::Emit(c) => {
            check(c)?;
            let from = if last_label == Some(c) { pair.blank } else { pair.total() };
            CtcScorePair {
                blank: LOG_ZERO,
                nonblank: from + frame[c as usize],
            }
        }
    })
}

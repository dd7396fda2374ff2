use std::fmt::Write as _;
use std::path::Path;

use super::AcousticError;
use crate::numeric::log_sum_exp;

/// Rows of a normalized matrix must logsumexp to zero within this bound.
pub const ROW_TOLERANCE: f64 = 1e-6;
/// Loader tolerance before re-normalization.
pub const FILE_ROW_TOLERANCE: f64 = 1e-3;

/// Per-frame log-probabilities over the ASR vocabulary (blank at column 0).
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionMatrix {
    frames: usize,
    vocab: usize,
    data: Vec<f64>,
}

impl EmissionMatrix {
    /// Wraps row-major log-probabilities that are already normalized.
    pub fn new(frames: usize, vocab: usize, data: Vec<f64>) -> Result<Self, AcousticError> {
        let m = Self::unchecked(frames, vocab, data)?;
        for t in 0..frames {
            let dev = log_sum_exp(m.row(t)).abs();
            if !(dev <= ROW_TOLERANCE) {
                return Err(AcousticError::Unnormalized { frame: t, deviation: dev });
            }
        }
        Ok(m)
    }

    /// Normalizes every row with a log-softmax.
    pub fn from_logits(frames: usize, vocab: usize, mut data: Vec<f64>) -> Result<Self, AcousticError> {
        if frames == 0 || vocab == 0 {
            return Err(AcousticError::Empty);
        }
        if data.len() != frames * vocab {
            return Err(AcousticError::Shape {
                expected: frames * vocab,
                found: data.len(),
            });
        }
        for row in data.chunks_mut(vocab) {
            let z = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= z);
        }
        Self::unchecked(frames, vocab, data)
    }

    fn unchecked(frames: usize, vocab: usize, data: Vec<f64>) -> Result<Self, AcousticError> {
        if frames == 0 || vocab == 0 {
            return Err(AcousticError::Empty);
        }
        if data.len() != frames * vocab {
            return Err(AcousticError::Shape {
                expected: frames * vocab,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(AcousticError::NonFinite { frame: pos / vocab });
        }
        Ok(Self { frames, vocab, data })
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.vocab)
    }

    /// First `frames` rows.
    pub fn truncated(&self, frames: usize) -> Result<Self, AcousticError> {
        let frames = frames.min(self.frames);
        Self::unchecked(frames, self.vocab, self.data[..frames * self.vocab].to_vec())
    }

    /// Per-frame argmax.
    pub fn greedy_path(&self) -> Vec<u32> {
        self.rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0 as u32
            })
            .collect()
    }

    /// `T V` header followed by one row per line, 9 significant digits.
    pub fn to_file_string(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 16);
        let _ = writeln!(out, "{} {}", self.frames, self.vocab);
        for row in self.rows() {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.8e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format; rows are re-normalized after checking they
    /// deviate from a distribution by at most [`FILE_ROW_TOLERANCE`].
    pub fn parse(text: &str) -> Result<Self, AcousticError> {
        let parse_err = |line: usize, msg: &str| AcousticError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(AcousticError::Empty)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(1, "header must be \"T V\""))?;
        let [frames, vocab] = dims[..] else {
            return Err(parse_err(1, "header must be \"T V\""));
        };
        let mut data = Vec::with_capacity(frames * vocab);
        let mut rows = 0;
        for (i, line) in lines {
            let before = data.len();
            for field in line.split_whitespace() {
                data.push(field.parse::<f64>().map_err(|_| parse_err(i + 1, "bad number"))?);
            }
            if data.len() - before != vocab {
                return Err(parse_err(i + 1, "row length differs from V"));
            }
            rows += 1;
        }
        if rows != frames {
            return Err(parse_err(rows + 1, "row count differs from T"));
        }
        let raw = Self::unchecked(frames, vocab, data)?;
        for t in 0..frames {
            let dev = log_sum_exp(raw.row(t)).abs();
            if !(dev <= FILE_ROW_TOLERANCE) {
                return Err(AcousticError::Unnormalized { frame: t, deviation: dev });
            }
        }
        Self::from_logits(frames, vocab, raw.data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, AcousticError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), AcousticError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

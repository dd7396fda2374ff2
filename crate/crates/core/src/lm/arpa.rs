use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::ngram::{Entry, NGramModel};
use super::LmError;
use crate::tokenization::{TokenId, Vocabulary};

const LN_10: f64 = std::f64::consts::LN_10;

impl NGramModel {
    /// ARPA text (log10 probabilities and backoffs).
    pub fn to_arpa_string(&self) -> String {
        let mut out = String::from("\n\\data\\\n");
        for k in 1..=self.order() {
            let _ = writeln!(out, "ngram {k}={}", self.tables[k - 1].len());
        }
        for k in 1..=self.order() {
            let _ = write!(out, "\n\\{k}-grams:\n");
            let mut entries: Vec<(&Vec<TokenId>, &Entry)> = self.tables[k - 1].iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            for (gram, e) in entries {
                let _ = write!(out, "{}\t", e.logprob / LN_10);
                for (i, &id) in gram.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    out.push_str(self.vocab().token(id).unwrap_or("<unk>"));
                }
                if e.backoff != 0.0 {
                    let _ = write!(out, "\t{}", e.backoff / LN_10);
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    /// Parses ARPA text, mapping words through `vocab`.
    pub fn from_arpa_str(text: &str, vocab: &Vocabulary) -> Result<Self, LmError> {
        let err = |line: usize, msg: &str| LmError::Arpa { line: line + 1, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i, l.trim())).filter(|(_, l)| !l.is_empty());

        match lines.next() {
            Some((_, "\\data\\")) => {}
            Some((i, _)) => return Err(err(i, "expected \\data\\")),
            None => return Err(LmError::EmptyUnigrams),
        }

        let mut declared: Vec<usize> = Vec::new();
        let mut pending = None;
        for (i, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (k, n) = rest.split_once('=').ok_or_else(|| err(i, "bad ngram count line"))?;
                let k: usize = k.trim().parse().map_err(|_| err(i, "bad n-gram order"))?;
                let n: usize = n.trim().parse().map_err(|_| err(i, "bad n-gram count"))?;
                if k != declared.len() + 1 {
                    return Err(err(i, "n-gram counts out of order"));
                }
                declared.push(n);
            } else {
                pending = Some((i, line));
                break;
            }
        }
        if declared.is_empty() {
            return Err(LmError::EmptyUnigrams);
        }
        if declared.len() > super::ngram::MAX_ORDER {
            return Err(LmError::InvalidOrder(declared.len()));
        }
        let order = declared.len();
        let mut tables: Vec<HashMap<Vec<TokenId>, Entry>> = vec![HashMap::new(); order];
        let mut current: Option<usize> = None;
        let mut seen_end = false;

        let mut handle = |i: usize, line: &str, current: &mut Option<usize>| -> Result<bool, LmError> {
            if line == "\\end\\" {
                return Ok(true);
            }
            if let Some(k) = line
                .strip_prefix('\\')
                .and_then(|l| l.strip_suffix("-grams:"))
            {
                let k: usize = k.parse().map_err(|_| err(i, "bad section header"))?;
                if k != current.map_or(1, |c| c + 1) || k > order {
                    return Err(err(i, "unexpected section"));
                }
                *current = Some(k);
                return Ok(false);
            }
            let k = current.ok_or_else(|| err(i, "n-gram entry outside a section"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != k + 1 && fields.len() != k + 2 {
                return Err(err(i, "wrong number of fields"));
            }
            let logprob: f64 = fields[0].parse().map_err(|_| err(i, "bad probability"))?;
            let backoff: f64 = match fields.get(k + 1) {
                Some(b) => b.parse().map_err(|_| err(i, "bad backoff"))?,
                None => 0.0,
            };
            let mut gram = Vec::with_capacity(k);
            for w in &fields[1..=k] {
                gram.push(vocab.id(w).ok_or_else(|| err(i, &format!("word {w:?} not in vocabulary")))?);
            }
            let entry = Entry {
                logprob: logprob * LN_10,
                backoff: backoff * LN_10,
            };
            if tables[k - 1].insert(gram, entry).is_some() {
                return Err(err(i, "duplicate n-gram"));
            }
            Ok(false)
        };

        if let Some((i, line)) = pending {
            seen_end = handle(i, line, &mut current)?;
        }
        if !seen_end {
            for (i, line) in lines {
                if handle(i, line, &mut current)? {
                    seen_end = true;
                    break;
                }
            }
        }
        if !seen_end {
            return Err(LmError::Arpa {
                line: text.lines().count(),
                msg: "missing \\end\\".into(),
            });
        }
        if tables[0].is_empty() {
            return Err(LmError::EmptyUnigrams);
        }
        for (k, (table, &header)) in tables.iter().zip(&declared).enumerate() {
            if table.len() != header {
                return Err(LmError::ArpaCountMismatch {
                    order: k + 1,
                    header,
                    body: table.len(),
                });
            }
        }
        Ok(NGramModel::from_tables(order, vocab.clone(), tables))
    }
}

pub fn write_arpa(model: &NGramModel, path: impl AsRef<Path>) -> Result<(), LmError> {
    std::fs::write(path, model.to_arpa_string())?;
    Ok(())
}

/// Reads an ARPA file; words are resolved against `vocab`.
pub fn read_arpa(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<NGramModel, LmError> {
    NGramModel::from_arpa_str(&std::fs::read_to_string(path)?, vocab)
}

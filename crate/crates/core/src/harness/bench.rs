use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{generate_corpus, split_corpus};
use super::dataset::{gen_dataset, Utterance};
use super::wer::{wer_text, WerCounts};
use super::HarnessError;
use crate::acoustic::SynthConfig;
use crate::decoder::{DecodeConfig, DecodeMode, Decoder, FusionPolicy, LmSlot};
use crate::lm::{train_ngram, LatencyScorer, LmScorer, NGramModel};
use crate::tokenization::{build_vocab, Tokenizer, VocabKind, WORD_BEGIN};

/// Columns that depend on the clock.
pub const TIME_COLUMNS: &[&str] = &["decode_ms", "emulated_lm_ms"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    /// Text corpus; a synthetic one is generated when absent.
    pub corpus: Option<PathBuf>,
    pub corpus_sentences: usize,
    pub eval_fraction: f64,
    pub utterances: usize,
    pub noise: f64,
    pub frames_per_token: (usize, usize),
    pub gap_prob: f64,
    pub asr_vocab_size: usize,
    pub lm_vocab_size: usize,
    /// Use the ASR vocabulary for the delayed LM as well.
    pub shared_vocab: bool,
    pub lm_order: usize,
    pub discount: f64,
    pub lm_weight: f64,
    /// `ctc` or `labelsync`.
    pub mode: String,
    /// Any of `always`, `never`, `shortest`, `interval`.
    pub policies: Vec<String>,
    pub beams: Vec<usize>,
    pub intervals: Vec<usize>,
    /// Also run the no-LM and pre-pruning shallow-fusion baselines.
    pub baselines: bool,
    pub latency_per_call_ms: f64,
    pub latency_per_token_ms: f64,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            corpus: None,
            corpus_sentences: 2000,
            eval_fraction: 0.1,
            utterances: 50,
            noise: 0.21,
            frames_per_token: (2, 4),
            gap_prob: 0.3,
            asr_vocab_size: 64,
            lm_vocab_size: 128,
            shared_vocab: false,
            lm_order: 3,
            discount: 0.4,
            lm_weight: 0.5,
            mode: "ctc".into(),
            policies: vec!["never".into(), "shortest".into(), "interval".into()],
            beams: vec![10],
            intervals: vec![16, 32, 64],
            baselines: true,
            latency_per_call_ms: 0.0,
            latency_per_token_ms: 0.0,
            out: None,
        }
    }
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.utterances == 0 || self.corpus_sentences == 0 {
            return fail("counts must be at least 1".into());
        }
        if self.policies.is_empty() {
            return fail("at least one policy is required".into());
        }
        if self.beams.is_empty() || self.beams.contains(&0) {
            return fail("beam sizes must be at least 1".into());
        }
        for p in &self.policies {
            if FusionPolicy::from_name(p, 1).is_none() {
                return fail(format!("unknown policy {p:?}"));
            }
        }
        if self.policies.iter().any(|p| p == "interval") && (self.intervals.is_empty() || self.intervals.contains(&0)) {
            return fail("interval policy needs intervals of at least 1".into());
        }
        parse_mode(&self.mode)?;
        if !self.lm_weight.is_finite() {
            return fail("LM weight must be finite".into());
        }
        Ok(())
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            frames_per_token: self.frames_per_token,
            noise: self.noise,
            gap_prob: self.gap_prob,
            edge_blanks: true,
        }
    }
}

pub fn parse_mode(name: &str) -> Result<DecodeMode, HarnessError> {
    match name {
        "ctc" | "frame" => Ok(DecodeMode::FrameSync),
        "labelsync" | "label" => Ok(DecodeMode::LabelSync),
        other => Err(HarnessError::Config(format!("unknown mode {other:?}"))),
    }
}

/// Tokenizers and LMs derived from one corpus.
pub struct Assets {
    pub train: Vec<String>,
    pub eval: Vec<String>,
    pub asr: Tokenizer,
    pub lm_tokenizer: Tokenizer,
    /// Trained on `lm_tokenizer` tokens.
    pub lm: NGramModel,
    /// Trained on ASR tokens; used for shallow fusion.
    pub asr_lm: NGramModel,
}

impl Assets {
    pub fn prepare(cfg: &BenchConfig) -> Result<Self, HarnessError> {
        let lines = match &cfg.corpus {
            Some(path) => fs::read_to_string(path)?
                .lines()
                .map(str::to_string)
                .filter(|l| !l.trim().is_empty())
                .collect(),
            None => generate_corpus(cfg.corpus_sentences, cfg.seed),
        };
        let (train, eval) = split_corpus(&lines, cfg.eval_fraction, cfg.seed)?;
        let asr = Tokenizer::new(build_vocab(&train, cfg.asr_vocab_size, WORD_BEGIN, VocabKind::Asr)?);
        let lm_tokenizer = if cfg.shared_vocab {
            Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm))
        } else {
            Tokenizer::new(build_vocab(&train, cfg.lm_vocab_size, WORD_BEGIN, VocabKind::Lm)?)
        };
        let lm = train_on(&train, &lm_tokenizer, cfg)?;
        let asr_lm_tok = Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm));
        let asr_lm = train_on(&train, &asr_lm_tok, cfg)?;
        Ok(Self {
            train,
            eval,
            asr,
            lm_tokenizer,
            lm,
            asr_lm,
        })
    }

    /// The ASR vocabulary viewed as an LM vocabulary.
    pub fn asr_as_lm(&self) -> Tokenizer {
        Tokenizer::new(self.asr.vocab().with_kind(VocabKind::Lm))
    }
}

fn train_on(lines: &[String], tok: &Tokenizer, cfg: &BenchConfig) -> Result<NGramModel, HarnessError> {
    let corpus: Vec<_> = lines.iter().map(|l| tok.encode(l)).collect();
    Ok(train_ngram(&corpus, tok.vocab(), cfg.lm_order, cfg.discount)?)
}

/// Aggregate of one decoder over a set of utterances.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CellStats {
    pub utterances: usize,
    pub failed: usize,
    pub counts: WerCounts,
    pub lm_calls: u64,
    pub lm_tokens_scored: u64,
    pub hypotheses_lm_scored: u64,
    pub hypotheses_expanded: u64,
    pub decode_ms: f64,
    /// One best text per utterance (empty for failures), in input order.
    pub hypotheses: Vec<String>,
}

/// Decodes every utterance and aggregates WER and counters.
pub fn decode_all(decoder: &Decoder<'_>, utterances: &[Utterance]) -> CellStats {
    let start = Instant::now();
    let results: Vec<_> = utterances
        .par_iter()
        .map(|u| decoder.decode(&u.emissions).map(|r| (wer_text(&u.reference, &r.best.text), r)))
        .collect();
    let mut stats = CellStats {
        utterances: utterances.len(),
        ..CellStats::default()
    };
    for (res, u) in results.into_iter().zip(utterances) {
        match res {
            Ok((counts, r)) => {
                stats.counts.add(&counts);
                stats.lm_calls += r.counters.lm_calls;
                stats.lm_tokens_scored += r.counters.lm_tokens_scored;
                stats.hypotheses_lm_scored += r.counters.hypotheses_lm_scored;
                stats.hypotheses_expanded += r.counters.hypotheses_expanded;
                stats.hypotheses.push(r.best.text);
            }
            Err(_) => {
                stats.failed += 1;
                stats.counts.add(&wer_text(&u.reference, ""));
                stats.hypotheses.push(String::new());
            }
        }
    }
    stats.decode_ms = start.elapsed().as_secs_f64() * 1e3;
    stats
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `none`, `shallow_ref`, or a fusion policy name.
    pub policy: String,
    pub mode: String,
    pub beam: usize,
    /// 0 unless the policy is `interval`.
    pub interval: usize,
    pub utterances: usize,
    pub failed: usize,
    pub ref_words: usize,
    /// Percent.
    pub wer: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub lm_calls: u64,
    pub lm_tokens_scored: u64,
    pub hypotheses_lm_scored: u64,
    pub hypotheses_expanded: u64,
    pub decode_ms: f64,
    pub emulated_lm_ms: f64,
}

/// One cell of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    NoLm { beam: usize },
    ShallowRef { beam: usize },
    Delayed { beam: usize, policy: FusionPolicy },
}

impl Cell {
    fn beam(&self) -> usize {
        match *self {
            Cell::NoLm { beam } | Cell::ShallowRef { beam } | Cell::Delayed { beam, .. } => beam,
        }
    }
}

/// Sweep order: per beam, baselines first, then policies in config order
/// with intervals expanded.
pub fn cells(cfg: &BenchConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &beam in &cfg.beams {
        if cfg.baselines {
            out.push(Cell::NoLm { beam });
            out.push(Cell::ShallowRef { beam });
        }
        for name in &cfg.policies {
            if name == "interval" {
                for &i in &cfg.intervals {
                    out.push(Cell::Delayed {
                        beam,
                        policy: FusionPolicy::FixedInterval(i),
                    });
                }
            } else if let Some(policy) = FusionPolicy::from_name(name, 1) {
                out.push(Cell::Delayed { beam, policy });
            }
        }
    }
    out
}

/// Runs one cell, auditing decoder-side call counts against the scorer's.
pub fn run_cell(
    cfg: &BenchConfig,
    assets: &Assets,
    utterances: &[Utterance],
    cell: Cell,
) -> Result<BenchRow, HarnessError> {
    let mode = parse_mode(&cfg.mode)?;
    let asr_lm_tok = assets.asr_as_lm();
    let (model, tokenizer) = match cell {
        Cell::ShallowRef { .. } => (&assets.asr_lm, &asr_lm_tok),
        _ if cfg.shared_vocab => (&assets.asr_lm, &asr_lm_tok),
        _ => (&assets.lm, &assets.lm_tokenizer),
    };
    let scorer = LatencyScorer::from_millis(model, cfg.latency_per_call_ms, cfg.latency_per_token_ms);
    scorer.reset();
    let (slots, policy) = match cell {
        Cell::NoLm { .. } => (vec![], FusionPolicy::Never),
        Cell::ShallowRef { .. } => (
            vec![LmSlot::shallow(&scorer, tokenizer, cfg.lm_weight)],
            FusionPolicy::Never,
        ),
        Cell::Delayed { policy, .. } => (vec![LmSlot::delayed(&scorer, tokenizer, cfg.lm_weight)], policy),
    };
    let decoder = Decoder::new(
        &assets.asr,
        slots,
        DecodeConfig {
            beam: cell.beam(),
            mode,
            policy,
            ..DecodeConfig::default()
        },
    )?;
    let stats = decode_all(&decoder, utterances);
    let scorer_calls = scorer.counters().calls;
    if scorer_calls != stats.lm_calls {
        return Err(HarnessError::Audit {
            decoder: stats.lm_calls,
            scorer: scorer_calls,
        });
    }
    let (policy_name, interval) = match cell {
        Cell::NoLm { .. } => ("none", 0),
        Cell::ShallowRef { .. } => ("shallow_ref", 0),
        Cell::Delayed { policy, .. } => match policy {
            FusionPolicy::FixedInterval(i) => ("interval", i),
            p => (p.name(), 0),
        },
    };
    Ok(BenchRow {
        policy: policy_name.into(),
        mode: cfg.mode.clone(),
        beam: cell.beam(),
        interval,
        utterances: stats.utterances,
        failed: stats.failed,
        ref_words: stats.counts.ref_words,
        wer: 100.0 * stats.counts.wer(),
        substitutions: stats.counts.substitutions,
        insertions: stats.counts.insertions,
        deletions: stats.counts.deletions,
        lm_calls: stats.lm_calls,
        lm_tokens_scored: stats.lm_tokens_scored,
        hypotheses_lm_scored: stats.hypotheses_lm_scored,
        hypotheses_expanded: stats.hypotheses_expanded,
        decode_ms: stats.decode_ms,
        emulated_lm_ms: scorer.emulated_cost().as_secs_f64() * 1e3,
    })
}

/// Prepares assets and data, then runs every cell in sweep order. A cell
/// whose setup fails is reported with every utterance marked failed.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, HarnessError> {
    cfg.validate()?;
    let assets = Assets::prepare(cfg)?;
    let utterances = gen_dataset(&assets.eval, &assets.asr, cfg.utterances, &cfg.synth(), cfg.seed)?;
    let mut rows = Vec::new();
    for cell in cells(cfg) {
        match run_cell(cfg, &assets, &utterances, cell) {
            Ok(row) => rows.push(row),
            Err(HarnessError::Audit { decoder, scorer }) => {
                return Err(HarnessError::Audit { decoder, scorer });
            }
            Err(_) => rows.push(BenchRow {
                policy: format!("{cell:?}"),
                mode: cfg.mode.clone(),
                beam: cell.beam(),
                interval: 0,
                utterances: utterances.len(),
                failed: utterances.len(),
                ref_words: 0,
                wer: 100.0,
                substitutions: 0,
                insertions: 0,
                deletions: 0,
                lm_calls: 0,
                lm_tokens_scored: 0,
                hypotheses_lm_scored: 0,
                hypotheses_expanded: 0,
                decode_ms: 0.0,
                emulated_lm_ms: 0.0,
            }),
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    fs::write(path, rows_to_csv(rows)?)?;
    Ok(())
}

/// CSV text with the time columns blanked, for reproducibility checks.
pub fn strip_time_columns(csv_text: &str) -> Result<String, HarnessError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let keep: Vec<bool> = headers.iter().map(|h| !TIME_COLUMNS.contains(&h)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers.iter().zip(&keep).filter(|(_, k)| **k).map(|(h, _)| h))?;
    for rec in reader.records() {
        let rec = rec?;
        w.write_record(rec.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use delayed_fusion::acoustic::{brute_force_ctc, brute_force_ctc_prefix, ctc_forward, EmissionMatrix, SynthConfig};
use delayed_fusion::decoder::{DecodeConfig, DecodeMode, Decoder, FusionPolicy, LmSlot};
use delayed_fusion::harness::{gen_dataset, run_bench, write_csv, write_dataset, BenchConfig};
use delayed_fusion::lm::{read_arpa, train_ngram, write_arpa, DEFAULT_DISCOUNT, DEFAULT_ORDER};
use delayed_fusion::tokenization::{build_vocab, TokenId, Tokenizer, VocabKind, Vocabulary, WORD_BEGIN};

#[derive(Parser)]
#[command(name = "dfuse", version, about = "Delayed LM fusion for CTC beam search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Asr,
    Lm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Shallow,
    Never,
    Shortest,
    Interval,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ctc,
    Labelsync,
}

#[derive(Clone, Copy, ValueEnum)]
enum YesNo {
    Yes,
    No,
}

#[derive(Subcommand)]
enum Command {
    /// Build a wordpiece vocabulary from a corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "asr")]
        kind: Kind,
    },
    /// Train an n-gram LM and write it as ARPA.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
        discount: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize emission files for sentences of a held-out corpus.
    GenData {
        #[arg(long)]
        corpus: PathBuf,
        /// ASR vocabulary.
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode one emission file.
    Decode {
        #[arg(long)]
        emissions: PathBuf,
        #[arg(long)]
        asr_vocab: PathBuf,
        #[arg(long, requires = "lm_vocab")]
        lm: Option<PathBuf>,
        #[arg(long)]
        lm_vocab: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "shortest")]
        policy: PolicyArg,
        #[arg(long, default_value_t = 16)]
        interval: usize,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[arg(long, default_value_t = 0.5)]
        lm_weight: f64,
        /// Shallow-fused LM over the ASR vocabulary.
        #[arg(long)]
        second_lm: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        second_weight: f64,
        #[arg(long, value_enum, default_value = "yes")]
        second_final: YesNo,
        #[arg(long, value_enum, default_value = "ctc")]
        mode: ModeArg,
        #[arg(long)]
        json: bool,
    },
    /// Run a policy/beam sweep and write CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact reference computations.
    Oracle {
        #[command(subcommand)]
        what: OracleCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Compare path enumeration with the forward algorithm.
    Ctc {
        #[arg(long)]
        emissions: PathBuf,
        /// Space- or comma-separated label ids.
        #[arg(long)]
        labels: String,
    },
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read(path).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn parse_labels(text: &str) -> Result<Vec<TokenId>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<TokenId>().with_context(|| format!("invalid label {s:?}")))
        .collect()
}

/// Prints a line, treating a closed pipe as success.
fn emit(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildVocab {
            corpus,
            size,
            out,
            kind,
        } => {
            let kind = match kind {
                Kind::Asr => VocabKind::Asr,
                Kind::Lm => VocabKind::Lm,
            };
            let vocab = build_vocab(&read_lines(&corpus)?, size, WORD_BEGIN, kind)?;
            vocab.write(&out)?;
            eprintln!("wrote {} tokens to {}", vocab.len(), out.display());
        }
        Command::TrainLm {
            corpus,
            vocab,
            order,
            discount,
            out,
        } => {
            let tok = Tokenizer::new(read_vocab(&vocab)?);
            let sentences: Vec<_> = read_lines(&corpus)?.iter().map(|l| tok.encode(l)).collect();
            let model = train_ngram(&sentences, tok.vocab(), order, discount)?;
            write_arpa(&model, &out)?;
            eprintln!("wrote {}-gram model to {}", order, out.display());
        }
        Command::GenData {
            corpus,
            vocab,
            count,
            noise,
            seed,
            out,
        } => {
            let asr = Tokenizer::new(read_vocab(&vocab)?);
            let cfg = SynthConfig {
                noise,
                ..SynthConfig::default()
            };
            let utts = gen_dataset(&read_lines(&corpus)?, &asr, count, &cfg, seed)?;
            write_dataset(&out, &utts)?;
            eprintln!("wrote {} utterances to {}", utts.len(), out.display());
        }
        Command::Decode {
            emissions,
            asr_vocab,
            lm,
            lm_vocab,
            policy,
            interval,
            beam,
            lm_weight,
            second_lm,
            second_weight,
            second_final,
            mode,
            json,
        } => {
            let emissions = EmissionMatrix::read(&emissions)?;
            let asr = Tokenizer::new(read_vocab(&asr_vocab)?);
            let lm_tok = lm_vocab.as_deref().map(read_vocab).transpose()?.map(Tokenizer::new);
            let model = match (&lm, &lm_tok) {
                (Some(path), Some(tok)) => Some(read_arpa(path, tok.vocab())?),
                _ => None,
            };
            let second_tok = Tokenizer::new(asr.vocab().with_kind(VocabKind::Lm));
            let second = second_lm
                .as_deref()
                .map(|p| read_arpa(p, second_tok.vocab()))
                .transpose()?;

            let mut slots = Vec::new();
            if let (Some(m), Some(tok)) = (&model, &lm_tok) {
                slots.push(LmSlot::delayed(m, tok, lm_weight));
            }
            if let Some(m) = &second {
                slots.push(LmSlot::shallow(m, &second_tok, second_weight).in_final(matches!(second_final, YesNo::Yes)));
            }
            let config = DecodeConfig {
                beam,
                mode: match mode {
                    ModeArg::Ctc => DecodeMode::FrameSync,
                    ModeArg::Labelsync => DecodeMode::LabelSync,
                },
                policy: match policy {
                    PolicyArg::Shallow => FusionPolicy::Always,
                    PolicyArg::Never => FusionPolicy::Never,
                    PolicyArg::Shortest => FusionPolicy::ShortestHyp,
                    PolicyArg::Interval => FusionPolicy::FixedInterval(interval),
                },
                ..DecodeConfig::default()
            };
            let result = Decoder::new(&asr, slots, config)?.decode(&emissions)?;
            if json {
                let out = json!({
                    "best": result.best.text,
                    "nbest": result.nbest.iter().map(|h| json!({
                        "text": h.text,
                        "tokens": h.tokens,
                        "e2e": h.e2e,
                        "lm": h.lm_raw,
                        "combined": h.combined,
                        "score": h.score,
                    })).collect::<Vec<_>>(),
                    "counters": result.counters,
                });
                emit(&serde_json::to_string_pretty(&out)?)?;
            } else {
                emit(&result.best.text)?;
            }
        }
        Command::Bench { config, out } => {
            let cfg = BenchConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.out.clone())
                .context("no output path: pass --out or set `out` in the config")?;
            let rows = run_bench(&cfg)?;
            write_csv(&rows, &out)?;
            for r in &rows {
                eprintln!(
                    "{:<12} beam={:<3} I={:<3} WER={:6.2}% calls={:<6} tokens={:<8} hyps={}",
                    r.policy, r.beam, r.interval, r.wer, r.lm_calls, r.lm_tokens_scored, r.hypotheses_lm_scored
                );
            }
            let failed: usize = rows.iter().map(|r| r.failed).sum();
            if failed > 0 {
                eprintln!("{failed} utterance decodes failed");
            }
        }
        Command::Oracle {
            what: OracleCommand::Ctc { emissions, labels },
        } => {
            let em = EmissionMatrix::read(&emissions)?;
            let labels = parse_labels(&labels)?;
            let exact = brute_force_ctc(&em, &labels)?;
            let prefix = brute_force_ctc_prefix(&em, &labels)?;
            let forward = ctc_forward(&em, &labels)?;
            println!("enumeration {exact:.12}");
            println!("forward     {forward:.12}");
            println!("prefix      {prefix:.12}");
            let agree = (exact == forward) || (exact - forward).abs() <= 1e-9;
            if !agree {
                println!("MISMATCH");
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use delayed_fusion::acoustic::EmissionMatrix;
use delayed_fusion::harness::{generate_corpus, read_manifest, split_corpus};

fn dfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfuse")).args(args).output().expect("dfuse runs")
}

fn ok(args: &[&str]) -> String {
    let out = dfuse(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let lines = generate_corpus(400, 3);
    let (train, eval) = split_corpus(&lines, 0.1, 3).unwrap();
    let (t, e) = (dir.join("train.txt"), dir.join("eval.txt"));
    fs::write(&t, train.join("\n")).unwrap();
    fs::write(&e, eval.join("\n")).unwrap();
    (t, e)
}

#[test]
fn full_pipeline_decodes_clean_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (train, eval) = write_corpus(d);
    let (asr, lmv, arpa, data) = (d.join("asr.vocab"), d.join("lm.vocab"), d.join("lm.arpa"), d.join("data"));
    ok(&["build-vocab", "--corpus", p(&train), "--size", "48", "--out", p(&asr)]);
    ok(&["build-vocab", "--corpus", p(&train), "--size", "80", "--out", p(&lmv), "--kind", "lm"]);
    ok(&["train-lm", "--corpus", p(&train), "--vocab", p(&lmv), "--out", p(&arpa)]);
    assert!(fs::read_to_string(&arpa).unwrap().trim_start().starts_with("\\data\\"));
    ok(&[
        "gen-data", "--corpus", p(&eval), "--vocab", p(&asr), "--count", "3", "--noise", "0", "--out", p(&data),
    ]);
    let manifest = read_manifest(&data).unwrap();
    assert_eq!(manifest.len(), 3);
    for entry in &manifest {
        let em = data.join(&entry.emissions);
        for policy in ["shortest", "never", "interval", "shallow"] {
            let out = ok(&[
                "decode", "--emissions", p(&em), "--asr-vocab", p(&asr), "--lm", p(&arpa), "--lm-vocab", p(&lmv),
                "--policy", policy, "--json",
            ]);
            let v: serde_json::Value = serde_json::from_str(&out).unwrap();
            assert_eq!(v["best"], entry.reference.as_str(), "{policy}");
            assert!(v["counters"]["lm_calls"].as_u64().unwrap() >= 1);
        }
        let plain = ok(&["decode", "--emissions", p(&em), "--asr-vocab", p(&asr), "--mode", "labelsync"]);
        assert_eq!(plain.trim(), entry.reference);
    }
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    let out = dir.path().join("rows.csv");
    fs::write(
        &cfg,
        "corpus_sentences = 400\nutterances = 4\nasr_vocab_size = 48\nlm_vocab_size = 80\nbeams = [3]\nintervals = [8]\n",
    )
    .unwrap();
    ok(&["bench", "--config", p(&cfg), "--out", p(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("policy,mode,beam,interval,utterances"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn oracle_agrees_on_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let em_path = dir.path().join("x.emis");
    let logits = vec![0.3, 1.0, -0.5, 0.0, 2.0, 0.1, -1.0, 0.5, 0.2, 0.7, 0.0, 1.5];
    EmissionMatrix::from_logits(4, 3, logits).unwrap().write(&em_path).unwrap();
    let out = ok(&["oracle", "ctc", "--emissions", p(&em_path), "--labels", "1,2"]);
    assert!(out.contains("enumeration"));
    assert!(out.trim_end().ends_with("ok"));
}

#[test]
fn errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.emis");
    let out = dfuse(&["decode", "--emissions", p(&missing), "--asr-vocab", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "beams = [0]\n").unwrap();
    let out = dfuse(&["bench", "--config", p(&cfg), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

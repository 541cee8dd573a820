use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dclm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dclm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dclm(args);
    assert_eq!(code(&out), 0, "{args:?} failed: {}", stderr(&out));
    out
}

/// Small synthetic corpus, its vocabulary, and the training-split vocab.
struct Fixture {
    dir: TempDir,
    corpus: PathBuf,
    vocab: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let corpus = path(&dir, "corpus.jsonl");
    let vocab = path(&dir, "vocab.json");
    ok(&[
        "gen-synthetic", "--dialogs", "96", "--vocab-size", "20", "--dependency", "cross-echo",
        "--seed", "4", "--out", s(&corpus),
    ]);
    ok(&["build-vocab", "--corpus", s(&corpus), "--train-split", "--out", s(&vocab)]);
    Fixture { dir, corpus, vocab }
}

fn train_neural(f: &Fixture, variant: &str, k: &str, out: &Path) {
    ok(&[
        "train", "--variant", variant, "--k", k, "--corpus", s(&f.corpus), "--vocab", s(&f.vocab),
        "--dims", "6", "--epochs", "1", "--batch-size", "16", "--seed", "3", "--out", s(out),
    ]);
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&dclm(&["--help"])), 0);
    assert_eq!(code(&dclm(&["train", "--help"])), 0);
    assert_eq!(code(&dclm(&[])), 1);
    let out = dclm(&["gen-synthetic", "--out", "x.jsonl", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--bogus"));
    assert_eq!(code(&dclm(&["gen-synthetic", "--out", "x.jsonl", "--dependency", "sideways"])), 1);
}

#[test]
fn gen_synthetic_is_seed_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let p = path(&dir, name);
        ok(&["gen-synthetic", "--dialogs", "30", "--vocab-size", "15", "--seed", seed, "--out", s(&p)]);
        std::fs::read(p).unwrap()
    };
    let a = run("a.jsonl", "9");
    assert!(!a.is_empty());
    assert_eq!(a, run("b.jsonl", "9"));
    assert_ne!(a, run("c.jsonl", "10"));
}

#[test]
fn convert_swda_csv() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "sw_0001_4325.csv");
    std::fs::write(
        &csv,
        "swda_filename,ptb_basename,conversation_no,transcript_index,act_tag,caller,utterance_index,subutterance_index,text,pos,trees,ptb_treenumbers\n\
         sw00utt/sw_0001_4325.utt,4/sw4325,4325,0,qw,A,1,1,What do you think?,What/WP do/VBP you/PRP think/VB ?/.,,\n\
         sw00utt/sw_0001_4325.utt,4/sw4325,4325,1,sd,B,2,1,Well I do.,Well/UH I/PRP do/VBP ./.,,\n",
    )
    .unwrap();
    let out = path(&dir, "corpus.jsonl");
    ok(&["convert", "--input", s(&csv), "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("sw00_4325"));
}

#[test]
fn train_is_reproducible_and_writes_a_log() {
    let f = fixture();
    let a = path(&f.dir, "a.dclm");
    let b = path(&f.dir, "b.dclm");
    train_neural(&f, "esidclm", "3", &a);
    train_neural(&f, "ESIDCLM", "3", &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let log_a = std::fs::read_to_string(path(&f.dir, "a.dclm.trainlog.jsonl")).unwrap();
    let log_b = std::fs::read_to_string(path(&f.dir, "b.dclm.trainlog.jsonl")).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.lines().count(), 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture();
    let cfg = path(&f.dir, "cfg.kv");
    std::fs::write(&cfg, "# toy\ndims = 4\nmax_epochs = 3\nk = 2\n").unwrap();
    let out = path(&f.dir, "m.dclm");
    let log = path(&f.dir, "m.log");
    ok(&[
        "train", "--variant", "ccdclm", "--corpus", s(&f.corpus), "--vocab", s(&f.vocab),
        "--config", s(&cfg), "--epochs", "2", "--out", s(&out), "--log", s(&log),
    ]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);

    std::fs::write(&cfg, "dims = four\n").unwrap();
    let bad = dclm(&[
        "train", "--variant", "ccdclm", "--corpus", s(&f.corpus), "--config", s(&cfg), "--out",
        s(&out),
    ]);
    assert_eq!(code(&bad), 1, "{}", stderr(&bad));
    let bad = dclm(&[
        "train", "--variant", "ccdclm", "--corpus", s(&f.corpus), "--set", "colour=blue", "--out",
        s(&out),
    ]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("colour"));
}

#[test]
fn missing_files_are_data_errors_naming_the_file() {
    let f = fixture();
    let missing = path(&f.dir, "nowhere.dclm");
    let out = dclm(&[
        "compare", "--models", s(&missing), "--test", s(&f.corpus), "--vocab", s(&f.vocab),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nowhere.dclm"));
    let out = dclm(&["build-vocab", "--corpus", "/no/such/corpus.jsonl", "--out", "v.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("corpus.jsonl"));
}

#[test]
fn eval_and_compare_neural_and_ngram() {
    let f = fixture();
    let st = path(&f.dir, "st.dclm");
    let id = path(&f.dir, "id.dclm");
    let kn = path(&f.dir, "kn.arpa");
    train_neural(&f, "singleturn", "1", &st);
    train_neural(&f, "idclm", "3", &id);
    ok(&[
        "train", "--ngram", "--order", "3", "--corpus", s(&f.corpus), "--vocab", s(&f.vocab),
        "--out", s(&kn),
    ]);
    assert!(std::fs::read_to_string(&kn).unwrap().contains("\\data\\"));

    let out = ok(&["eval", "--model", s(&st), "--test", s(&f.corpus), "--vocab", s(&f.vocab)]);
    assert!(stdout(&out).contains("Single-Turn-RNNLM"));
    let out = ok(&[
        "eval", "--model", s(&kn), "--test", s(&f.corpus), "--vocab", s(&f.vocab), "--json",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["variant"], "3-gram KN");
    assert!(report["overall"]["perplexity"].as_f64().unwrap() > 1.0);

    let models = format!("{},{},{}", s(&st), s(&id), s(&kn));
    let out = ok(&[
        "compare", "--models", &models, "--test", s(&f.corpus), "--vocab", s(&f.vocab),
        "--baseline", s(&st), "--json",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    let ppl: Vec<f64> = reports.iter().map(|r| r["overall"]["perplexity"].as_f64().unwrap()).collect();
    assert!(ppl.windows(2).all(|w| w[0] <= w[1]));
    let tokens: Vec<u64> = reports.iter().map(|r| r["overall"]["token_count"].as_u64().unwrap()).collect();
    assert!(tokens.iter().all(|&t| t == tokens[0]));
    assert_eq!(doc["relative_changes"][0]["overall"], 0.0);

    let out = ok(&[
        "compare", "--models", &models, "--test", s(&f.corpus), "--vocab", s(&f.vocab),
    ]);
    let text = stdout(&out);
    assert!(text.contains("3-gram KN") && text.contains("IDCLM") && text.contains("overall"));
}

#[test]
fn identical_checkpoints_compare_equal() {
    let f = fixture();
    let a = path(&f.dir, "a.dclm");
    let b = path(&f.dir, "b.dclm");
    train_neural(&f, "daclm", "2", &a);
    std::fs::copy(&a, &b).unwrap();
    let out = ok(&[
        "compare", "--models", &format!("{},{}", s(&a), s(&b)), "--test", s(&f.corpus), "--vocab",
        s(&f.vocab), "--baseline", s(&a), "--json",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let r = doc["reports"].as_array().unwrap();
    assert_eq!(r[0]["overall"], r[1]["overall"]);
    for c in doc["relative_changes"].as_array().unwrap() {
        assert_eq!(c["overall"], 0.0);
        assert!(c["per_pos_tag"].as_object().unwrap().values().all(|v| v == 0.0));
    }
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let f = fixture();
    let model = path(&f.dir, "m.dclm");
    train_neural(&f, "bowcontext", "2", &model);
    let other = path(&f.dir, "other.json");
    ok(&["build-vocab", "--corpus", s(&f.corpus), "--cap", "5", "--out", s(&other)]);
    let out = dclm(&["eval", "--model", s(&model), "--test", s(&f.corpus), "--vocab", s(&other)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("m.dclm"));
}

#[test]
fn gradcheck_exit_status_follows_tolerance() {
    let out = ok(&["gradcheck", "--variant", "esidclm", "--dims", "8", "--seeds", "2"]);
    assert!(stdout(&out).contains("max relative error"));
    let out = dclm(&["gradcheck", "--variant", "idclm", "--dims", "4", "--seeds", "1", "--tolerance", "1e-30"]);
    assert_eq!(code(&out), 3);
}

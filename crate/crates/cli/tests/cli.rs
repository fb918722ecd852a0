use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_CORPUS: &str = r#"{
  "source_pairs": 80, "target_recipes": 60, "target_test_pairs": 20,
  "common_ingredients": 30, "source_unique_ingredients": 10, "target_unique_ingredients": 5,
  "feature_dim": 8, "image_dim": 6, "unified_clusters": 12
}"#;

const QUICK_TRAIN: &str = r#"{"epochs": 2, "batch_size": 8, "hidden": 16, "embedding": 8}"#;

fn recmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recmix"))
        .args(args)
        .output()
        .expect("run recmix")
}

fn ok(args: &[&str]) -> String {
    let out = recmix(args);
    assert!(
        out.status.success(),
        "recmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>, String, Vec<u8>) {
    let corpus_cfg = dir.join("corpus.json");
    let train_cfg = dir.join("train.json");
    fs::write(&corpus_cfg, SMALL_CORPUS).unwrap();
    fs::write(&train_cfg, QUICK_TRAIN).unwrap();
    let corpus = dir.join("corpus.jsonl");
    let ckpt = dir.join("model.ckpt");
    let log = dir.join("log.csv");
    ok(&["gen", "--config", s(&corpus_cfg), "--out", s(&corpus)]);
    ok(&[
        "train", "--corpus", s(&corpus), "--config", s(&train_cfg), "--out", s(&ckpt), "--log", s(&log),
    ]);
    let report = ok(&["eval", "--ckpt", s(&ckpt), "--corpus", s(&corpus), "--q", "10", "--t", "3", "--seed", "4"]);
    (fs::read(&corpus).unwrap(), fs::read(&ckpt).unwrap(), report, fs::read(&log).unwrap())
}

#[test]
fn pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    assert_eq!(first, second);

    let report = &first.2;
    assert!(report.starts_with("repeat,q,medr,r1,r5,r10,r50\n"));
    assert_eq!(report.lines().count(), 5);
    assert!(report.lines().last().unwrap().starts_with("mean,10,"));
    let log = String::from_utf8(first.3).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn diag_reports_distances() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let proj = dir.path().join("proj.csv");
    let out = ok(&[
        "diag",
        "--ckpt",
        s(&dir.path().join("model.ckpt")),
        "--corpus",
        s(&dir.path().join("corpus.jsonl")),
        "--n",
        "15",
        "--projection",
        s(&proj),
    ]);
    assert!(out.starts_with("samples,recipe_distance,modality_distance"));
    let proj = fs::read_to_string(proj).unwrap();
    assert_eq!(proj.lines().count(), 1 + 3 * 15);
    assert!(proj.contains(",target,image"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"batch_size": 1}"#).unwrap();
    let corpus_cfg = dir.path().join("corpus.json");
    fs::write(&corpus_cfg, SMALL_CORPUS).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    ok(&["gen", "--config", s(&corpus_cfg), "--out", s(&corpus)]);

    let out = recmix(&["train", "--corpus", s(&corpus), "--config", s(&bad), "--out", s(&dir.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));

    fs::write(&bad, r#"{"sead": 3}"#).unwrap();
    let out = recmix(&["gen", "--config", s(&bad), "--out", s(&dir.path().join("c"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sead"));

    let out = recmix(&["eval", "--ckpt", "/nonexistent", "--corpus", s(&corpus)]);
    assert!(!out.status.success());
}

#[test]
fn gradcheck_lists_every_loss() {
    let out = ok(&["gradcheck", "--points", "2"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "loss,points,rejected,max_relative_error,pass");
    assert_eq!(lines.len(), 8);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
}

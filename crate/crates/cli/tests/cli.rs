use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn commonsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commonsum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn make_toy(dir: &Path) -> String {
    let out = commonsum(&["make-toy", "--dir", dir.to_str().unwrap(), "--train", "8", "--dev", "2", "--test", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("toy.toml").to_str().unwrap().to_string()
}

#[test]
fn make_toy_writes_a_loadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = make_toy(&tmp.path().join("toy"));
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "rules.json", "toy.toml"] {
        assert!(tmp.path().join("toy").join(f).exists(), "{f}");
    }
    let out = commonsum(&["--config", &config, "ingest"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("toy/run/data/train.jsonl").exists());
}

#[test]
fn stage_without_upstream_names_the_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = make_toy(&tmp.path().join("toy"));
    let out = commonsum(&["--config", &config, "format"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("upstream artifact missing"), "{err}");
    assert!(err.contains("select"), "{err}");
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let config = make_toy(&tmp.path().join("toy"));
    let text = fs::read_to_string(&config).unwrap().replace("test.jsonl", "missing.jsonl");
    fs::write(&config, text).unwrap();
    let out = commonsum(&["--config", &config, "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("corpus.test"), "{}", stderr(&out));
    assert!(!tmp.path().join("toy/run").exists());
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = make_toy(&tmp.path().join("toy"));
    let out = commonsum(&["--config", &config, "--strategy", "oracle", "select"]);
    assert!(!out.status.success());
}

#[test]
fn unreachable_backend_fails_generation_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = make_toy(&tmp.path().join("toy"));
    let ingest = commonsum(&["--config", &config, "ingest"]);
    assert!(ingest.status.success(), "{}", stderr(&ingest));
    let out = commonsum(&["--config", &config, "--backend", "http://127.0.0.1:9/infer", "gen-commonsense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

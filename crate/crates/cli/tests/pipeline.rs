use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
encoder:
  hidden_size: 16
  num_layers: 1
  num_heads: 2
  ffn_size: 32
  max_len: 96
  trainable_top_layers: 1
multitask_loss:
  kind: cross_entropy
schedule:
  epochs: 2
  learning_rate: 0.003
  grad_accum_steps: 2
cv:
  k: 2
  n_trials: 2
  max_epochs: 1
  space:
    learning_rate: [0.001, 0.003]
tta:
  n_passes: 2
";

fn promiseval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_promiseval"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = promiseval(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("tiny.yaml"), TINY).unwrap();
    let cfg = ["--config", "tiny.yaml"];
    let with = |args: &[&'static str]| -> Vec<&'static str> { cfg.iter().chain(args).copied().collect() };

    ok(dir, &with(&["synth", "--n", "60", "--out", "train.jsonl"]));
    ok(dir, &with(&["--seed", "7", "synth", "--n", "20", "--id-prefix", "test", "--out", "test.jsonl"]));

    ok(dir, &with(&["featurize", "--subtask", "3", "--in", "train.jsonl", "--out", "enriched.jsonl"]));
    let enriched = std::fs::read_to_string(dir.join("enriched.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(enriched.lines().next().unwrap()).unwrap();
    assert!(first["enriched_text"].as_str().unwrap().starts_with("Vague_Terms_"));
    assert_eq!(enriched.lines().count(), 60);

    ok(dir, &with(&["split", "--in", "train.jsonl", "--out", "folds.json"]));
    let folds: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("folds.json")).unwrap()).unwrap();
    assert_eq!(folds["k"], 4);

    ok(dir, &with(&["tune", "--subtask", "3", "--in", "train.jsonl", "--out", "trials.jsonl"]));
    let trials = std::fs::read_to_string(dir.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 2);

    ok(dir, &with(&["train", "--model", "combined", "--in", "train.jsonl", "--out", "m3"]));
    ok(dir, &with(&["train", "--model", "feature", "--subtask", "3", "--in", "train.jsonl", "--out", "m2c", "--trials", "trials.jsonl"]));
    ok(dir, &with(&["train", "--model", "feature", "--subtask", "4", "--in", "train.jsonl", "--out", "m2t"]));
    assert!(dir.join("m3/manifest.json").exists() && dir.join("m3/params.bin").exists());

    ok(dir, &with(&["predict", "--model", "m3", "--in", "test.jsonl", "--out", "p12.jsonl", "--tta-passes", "3", "--word-dropout", "0.1"]));
    ok(dir, &with(&["predict", "--model", "m2c", "--in", "test.jsonl", "--out", "p3.jsonl"]));
    ok(dir, &with(&["predict", "--model", "m2t", "--in", "test.jsonl", "--out", "p4.jsonl"]));
    let p12 = std::fs::read_to_string(dir.join("p12.jsonl")).unwrap();
    let pred: serde_json::Value = serde_json::from_str(p12.lines().next().unwrap()).unwrap();
    assert_eq!(pred["tasks"]["promise"]["per_pass"].as_array().unwrap().len(), 3);

    ok(dir, &with(&[
        "submit", "--combined", "p12.jsonl", "--feature", "p3.jsonl", "--feature", "p4.jsonl",
        "--records", "test.jsonl", "--out", "submission.csv",
    ]));
    let csv = std::fs::read_to_string(dir.join("submission.csv")).unwrap();
    assert!(csv.starts_with("id,promise_status,evidence_status,evidence_quality,verification_timeline\n"));
    assert_eq!(csv.lines().count(), 21);
    assert!(!csv.contains('\r'));

    let report = ok(dir, &with(&["evaluate", "--submission", "submission.csv", "--gold", "test.jsonl", "--out", "report.json"]));
    assert!(report.contains("mean"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let mean = json["mean_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
}

#[test]
fn predictions_replay_under_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("tiny.yaml"), TINY).unwrap();
    ok(dir, &["--config", "tiny.yaml", "synth", "--n", "40", "--out", "train.jsonl"]);
    ok(dir, &["--config", "tiny.yaml", "train", "--model", "combined", "--in", "train.jsonl", "--out", "m"]);
    for out in ["a.jsonl", "b.jsonl"] {
        ok(dir, &["--config", "tiny.yaml", "predict", "--model", "m", "--in", "train.jsonl", "--out", out]);
    }
    assert_eq!(
        std::fs::read(dir.join("a.jsonl")).unwrap(),
        std::fs::read(dir.join("b.jsonl")).unwrap()
    );
}

#[test]
fn exit_codes_separate_bad_input_from_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Unknown label: validation error.
    std::fs::write(dir.join("bad.jsonl"), "{\"id\":\"a\",\"text\":\"We will act.\",\"promise_status\":\"Maybe\"}\n").unwrap();
    let out = promiseval(dir, &["split", "--in", "bad.jsonl", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Bad flag value: rejected by the argument parser.
    let out = promiseval(dir, &["featurize", "--subtask", "9", "--in", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown config key: validation error.
    std::fs::write(dir.join("c.yaml"), "no_such_section: 1\n").unwrap();
    let out = promiseval(dir, &["--config", "c.yaml", "synth", "--out", "s.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing input file: I/O fault.
    let out = promiseval(dir, &["split", "--in", "missing.jsonl", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(1));

    // Corrupt checkpoint: internal fault.
    std::fs::create_dir(dir.join("ckpt")).unwrap();
    std::fs::write(dir.join("ckpt/manifest.json"), "{}").unwrap();
    std::fs::write(dir.join("records.jsonl"), "{\"id\":\"a\",\"text\":\"We will act.\"}\n").unwrap();
    let out = promiseval(dir, &["predict", "--model", "ckpt", "--in", "records.jsonl", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

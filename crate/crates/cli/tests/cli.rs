//! End-to-end tests of the `deduct` binary: exit codes, artifacts, and
//! the scripted inference fixture.

use std::path::Path;
use std::process::{Command, Output};

fn deduct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deduct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_fixture_library(path: &Path) {
    std::fs::write(
        path,
        r#"[{"id":"T000","statement":"sum rule combines quantities"},
           {"id":"T001","statement":"difference rule splits amounts"}]"#,
    )
    .unwrap();
}

#[test]
fn preprocess_synthetic_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = deduct(&[
        "preprocess",
        "--synthetic",
        "--n-theorems",
        "3",
        "--chains",
        "2",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("train.jsonl").is_file());
    assert!(dir.path().join("library.json").is_file());
}

#[test]
fn preprocess_missing_candidates_exits_2_and_names_path() {
    let out = deduct(&[
        "preprocess",
        "--candidates",
        "/nonexistent/candidates.json",
        "--out-library",
        "/tmp/lib.json",
        "--threshold",
        "0.9",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/candidates.json"));
}

#[test]
fn preprocess_threshold_out_of_range_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let candidates = dir.path().join("candidates.json");
    std::fs::write(&candidates, r#"["alpha rule", "beta rule"]"#).unwrap();
    let out = deduct(&[
        "preprocess",
        "--candidates",
        candidates.to_str().unwrap(),
        "--out-library",
        dir.path().join("lib.json").to_str().unwrap(),
        "--threshold",
        "1.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("threshold"));
}

#[test]
fn infer_scripted_fixture_prints_answer_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let premises = dir.path().join("premises.json");
    std::fs::write(&premises, r#"["a equals one","b equals two"]"#).unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"["c1 derived","c2 derived","done. ANSWER: 42"]"#,
    )
    .unwrap();
    let trace = dir.path().join("trace.json");
    let dot = dir.path().join("graph.dot");
    let out = deduct(&[
        "infer",
        "--question",
        "what is a plus b",
        "--premises",
        premises.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
        "--encoder",
        "average",
        "--trace-out",
        trace.to_str().unwrap(),
        "--dot-out",
        dot.to_str().unwrap(),
        "--dim",
        "32",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "42");
    let trace_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(trace_json["trace"].as_array().unwrap().len(), 3);
    assert_eq!(trace_json["termination"], "answered");
    let dot_text = std::fs::read_to_string(&dot).unwrap();
    assert!(dot_text.starts_with("digraph"));
}

#[test]
fn infer_scripted_without_script_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let premises = dir.path().join("premises.json");
    std::fs::write(&premises, r#"["a"]"#).unwrap();
    let out = deduct(&[
        "infer",
        "--question",
        "q",
        "--premises",
        premises.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--backend",
        "scripted",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--script"));
}

#[test]
fn train_rejects_zero_epochs_and_missing_library() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    std::fs::write(
        &train,
        r#"{"question":"q","premises":["p"],"target_conclusion":"c","steps":[{"description":"d","theorem_id":"T000","used_ids":[0],"result":"r"}]}"#,
    )
    .unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);

    let config = dir.path().join("train.toml");
    std::fs::write(&config, "epochs = 0\n").unwrap();
    let out = deduct(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-checkpoint",
        dir.path().join("ckpt.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochs"));

    let out = deduct(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--library",
        "/nonexistent/library.json",
        "--out-checkpoint",
        dir.path().join("ckpt.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/library.json"));
}

#[test]
fn train_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    std::fs::write(
        &train,
        r#"{"question":"q","premises":["p"],"target_conclusion":"c","steps":[{"description":"d","theorem_id":"T000","used_ids":[0],"result":"r"}]}"#,
    )
    .unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let config = dir.path().join("train.toml");
    std::fs::write(&config, "epochz = 3\n").unwrap();
    let out = deduct(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-checkpoint",
        dir.path().join("ckpt.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochz"));
}

/// Full pipeline smoke test: synthetic preprocess, a short training run,
/// inference with the resulting checkpoint, and a report from eval.
#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let out = deduct(&[
        "preprocess",
        "--synthetic",
        "--n-theorems",
        "3",
        "--chains",
        "3",
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let config = dir.path().join("train.toml");
    std::fs::write(
        &config,
        "epochs = 2\nhidden_dim = 8\nsamples_per_label_min = 4\nsamples_per_label_max = 8\n",
    )
    .unwrap();
    let ckpt = dir.path().join("ckpt.json");
    let log = dir.path().join("epochs.jsonl");
    let out = deduct(&[
        "train",
        "--train",
        out_dir.join("train.jsonl").to_str().unwrap(),
        "--library",
        out_dir.join("library.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-checkpoint",
        ckpt.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(ckpt.is_file());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);

    // Inference with the trained checkpoint and a one-shot script.
    let premises = dir.path().join("premises.json");
    std::fs::write(&premises, r#"["some fact one","some fact two"]"#).unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"["finished. ANSWER: ok"]"#).unwrap();
    let out = deduct(&[
        "infer",
        "--question",
        "what follows",
        "--premises",
        premises.to_str().unwrap(),
        "--library",
        out_dir.join("library.json").to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "ok");

    // Eval: sequential one-answer script per run; answers will not match the
    // gold labels, but the report must be written with both encoder rows.
    let test = dir.path().join("test.jsonl");
    std::fs::write(
        &test,
        r#"{"question":"q1","answer":"a1","premises":["p1","p2"]}
{"question":"q2","answer":"a2","premises":["p3"]}"#,
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let out = deduct(&[
        "eval",
        "--test",
        test.to_str().unwrap(),
        "--library",
        out_dir.join("library.json").to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--encoders",
        "gnn,average",
        "--repeats",
        "2",
        "--report",
        report.to_str().unwrap(),
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let rows = report_json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["config"], "gnn");
    assert_eq!(rows[1]["config"], "average");
}

#[test]
fn eval_gnn_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let test = dir.path().join("test.jsonl");
    std::fs::write(&test, r#"{"question":"q","answer":"a","premises":["p"]}"#).unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"["x. ANSWER: 1"]"#).unwrap();
    let out = deduct(&[
        "eval",
        "--test",
        test.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--encoders",
        "gnn",
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checkpoint"));
}

#[test]
fn infer_without_checkpoint_defaults_to_average_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let premises = dir.path().join("premises.json");
    std::fs::write(&premises, r#"["a equals one"]"#).unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"["done. ANSWER: 7"]"#).unwrap();
    let out = deduct(&[
        "infer",
        "--question",
        "q",
        "--premises",
        premises.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "7");
}

#[test]
fn infer_script_exhaustion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.json");
    write_fixture_library(&library);
    let premises = dir.path().join("premises.json");
    std::fs::write(&premises, r#"["a equals one"]"#).unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"["not final"]"#).unwrap();
    let out = deduct(&[
        "infer",
        "--question",
        "q",
        "--premises",
        premises.to_str().unwrap(),
        "--library",
        library.to_str().unwrap(),
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
        "--max-steps",
        "3",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

//! End-to-end CLI behavior: stage sequencing, artifact verification, config
//! file handling, and exit codes, all on a miniature benchmark.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_subgnn")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn subgnn")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "stage {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Tiny but complete benchmark: 60 subgraphs on a 1000-node base.
fn synth_tiny(dir: &Path) {
    run_ok(
        dir,
        &[
            "--seed",
            "11",
            "synth",
            "--task",
            "density",
            "--num-subgraphs",
            "60",
            "--base-nodes",
            "1000",
        ],
    );
}

fn build_stack(dir: &Path) {
    synth_tiny(dir);
    run_ok(dir, &["pretrain", "--dim", "8", "--epochs", "3"]);
    run_ok(dir, &["pools"]);
    run_ok(dir, &["precompute"]);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let none = Command::new(bin()).output().unwrap();
    assert_eq!(none.status.code(), Some(2), "no subcommand should be a usage error");
    let bad = run(dir.path(), &["synth", "--task", "nonsense"]);
    assert_eq!(bad.status.code(), Some(2), "unknown task should be a usage error");
}

#[test]
fn stages_out_of_order_name_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("synth"),
        "error should point at the missing stage, got: {err}"
    );

    synth_tiny(dir.path());
    let out = run(dir.path(), &["train", "--channels", "p", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("pretrain"),
        "train without embeddings should point at pretrain, got: {err}"
    );
}

#[test]
fn full_flow_produces_reports_and_untrained_eval_is_chance() {
    let dir = tempfile::tempdir().unwrap();
    build_stack(dir.path());
    run_ok(
        dir.path(),
        &["train", "--channels", "p", "--epochs", "2", "--seeds", "3"],
    );
    run_ok(
        dir.path(),
        &["ablate", "--epochs", "1", "--seeds", "3", "--jobs", "1"],
    );
    // No --checkpoint: evaluates a freshly initialized model, which predicts
    // one class everywhere and lands at the majority-class share.
    run_ok(dir.path(), &["eval", "--split", "test", "--channels", "p"]);
    let report = run_ok(dir.path(), &["report"]);

    for rel in [
        "manifest.json",
        "embeddings.bin",
        "pools.jsonl",
        "cache.bin",
        "checkpoints/model_P.ckpt",
        "reports/train.json",
        "reports/ablation.json",
        "reports/ablation.txt",
        "reports/ablation.csv",
        "reports/eval_test.json",
        "reports/report.txt",
    ] {
        assert!(dir.path().join(rel).is_file(), "missing artifact {rel}");
    }

    let eval: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("reports/eval_test.json")).unwrap(),
    )
    .unwrap();
    let f1 = eval["metrics"]["micro_f1"].as_f64().unwrap();
    assert!(
        (0.2..=0.47).contains(&f1),
        "untrained eval should sit at chance on a balanced 3-class set, got {f1}"
    );

    let table = String::from_utf8_lossy(&report.stdout).into_owned();
    for row in ["train[P]", "ablate[P]", "ablate[PNS]", "eval[test]"] {
        assert!(table.contains(row), "report table missing {row}:\n{table}");
    }
}

#[test]
fn modified_artifacts_are_refused_with_the_producing_stage_named() {
    let dir = tempfile::tempdir().unwrap();
    build_stack(dir.path());

    let emb = dir.path().join("embeddings.bin");
    let mut bytes = std::fs::read(&emb).unwrap();
    bytes.push(0xff);
    std::fs::write(&emb, bytes).unwrap();

    let out = run(dir.path(), &["train", "--channels", "p", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("modified") && err.contains("pretrain"),
        "tampered embeddings should be refused and name pretrain, got: {err}"
    );
}

#[test]
fn stale_downstream_artifacts_are_refused_after_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    build_stack(dir.path());

    // Regenerating the dataset with a different shape leaves the pools and
    // cache built from the old one.
    run_ok(
        dir.path(),
        &[
            "--seed",
            "11",
            "synth",
            "--task",
            "density",
            "--num-subgraphs",
            "63",
            "--base-nodes",
            "1000",
        ],
    );
    let out = run(dir.path(), &["train", "--channels", "p", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.contains("stale") && err.contains("re-run"),
        "stale artifacts should be refused with a remediation, got: {err}"
    );
}

#[test]
fn config_file_sections_apply_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    build_stack(dir.path());

    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"run": {"lr": 0.0005, "epochs": 2, "seeds": [5]}}"#,
    )
    .unwrap();
    run_ok(
        dir.path(),
        &[
            "--config",
            cfg_path.to_str().unwrap(),
            "train",
            "--channels",
            "p",
        ],
    );
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("reports/train.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["config"]["lr"].as_f64(), Some(0.0005));
    assert_eq!(report["seeds"][0]["seed"].as_u64(), Some(5));

    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, r#"{"run": {"learning_rate": 0.0005}}"#).unwrap();
    let out = run(
        dir.path(),
        &[
            "--config",
            bad_path.to_str().unwrap(),
            "train",
            "--channels",
            "p",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "unknown config keys should be rejected"
    );
}

#[test]
fn seed_flag_sets_the_manifest_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &[
            "--seed",
            "99",
            "synth",
            "--task",
            "component",
            "--num-subgraphs",
            "40",
            "--base-nodes",
            "900",
        ],
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["master_seed"].as_u64(), Some(99));
}

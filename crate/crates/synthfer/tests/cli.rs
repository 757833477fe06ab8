//! End-to-end checks of the command-line interface: artifact layouts,
//! subcommand round trips, and exit codes.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthfer"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} exited {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn report_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn generate_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();

    // Small identity suite keeps the synthetic render quick; the
    // surrogate-real statistics are fixed regardless.
    let stdout = run_ok(&["generate", "--out", data_s, "--identities", "4", "--seed", "5"]);
    assert!(stdout.contains("756"), "4 x 21 x 9 synthetic sequences:\n{stdout}");
    assert!(stdout.contains("123"), "surrogate-real count:\n{stdout}");
    for file in ["synthetic/manifest.json", "synthetic/sequences.bin",
                 "surrogate-real/manifest.json", "surrogate-real/sequences.bin", "config.json"] {
        assert!(data.join(file).exists(), "missing {file}");
    }

    // Single-fold training writes a loadable run directory + checkpoint.
    // Default seed, because `eval --assign-folds` always re-derives the
    // fold assignment with seed 0.
    let real = data.join("surrogate-real");
    let run_dir = tmp.path().join("nn-run");
    run_ok(&[
        "train", "--real", real.to_str().unwrap(), "--assign-folds",
        "--strategy", "real-only", "--epochs", "2", "--fold", "1",
        "--out", run_dir.to_str().unwrap(),
    ]);
    let train_report = report_json(&run_dir);
    assert_eq!(train_report["kind"], "single-fold");
    assert_eq!(train_report["test_fold"], 1);
    assert!(run_dir.join("checkpoint/model.json").exists());
    assert!(run_dir.join("confusion.csv").exists());

    // Evaluating the saved checkpoint reproduces the training run's
    // held-out confusion matrix.
    let eval_dir = tmp.path().join("eval-run");
    run_ok(&[
        "eval", "--checkpoint", run_dir.join("checkpoint").to_str().unwrap(),
        "--real", real.to_str().unwrap(), "--assign-folds", "--fold", "1",
        "--out", eval_dir.to_str().unwrap(),
    ]);
    let eval_report = report_json(&eval_dir);
    assert_eq!(eval_report["confusion"], train_report["confusion"]);
}

#[test]
fn cv_layout_and_report_merging() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    run_ok(&["generate", "--out", data.to_str().unwrap(), "--identities", "2", "--seed", "1"]);
    let real = data.join("surrogate-real");
    let real_s = real.to_str().unwrap();

    // KNN cross-validation: full CV layout with per-fold directories.
    let knn_dir = tmp.path().join("knn-cv");
    let stdout = run_ok(&[
        "train", "--real", real_s, "--assign-folds", "--model", "knn",
        "--strategy", "real-only", "--out", knn_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("cross-validation over 5 folds"), "{stdout}");
    let cv_report = report_json(&knn_dir);
    assert_eq!(cv_report["kind"], "cross-validation");
    assert_eq!(cv_report["folds"].as_array().unwrap().len(), 5);

    // Two single-fold runs on the same fold (same seed, so the same fold
    // membership) merge into a fairness table; they differ in freezing.
    for (name, freeze) in [("run-a", "0"), ("run-b", "3")] {
        run_ok(&[
            "train", "--real", real_s, "--assign-folds", "--strategy", "real-only",
            "--epochs", "2", "--fold", "0", "--seed", "3", "--freeze", freeze,
            "--out", tmp.path().join(name).to_str().unwrap(),
        ]);
    }
    let a = tmp.path().join("run-a");
    let b = tmp.path().join("run-b");
    let merged_dir = tmp.path().join("merged");
    let stdout = run_ok(&[
        "report", a.to_str().unwrap(), b.to_str().unwrap(),
        "--base", a.to_str().unwrap(),
        "--out", merged_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("minority-fold comparison"), "{stdout}");
    assert!(merged_dir.join("report.json").exists());

    // Merging a CV run with a base is rejected as a usage error.
    assert_eq!(
        run_code(&["report", knn_dir.to_str().unwrap(), "--base", knn_dir.to_str().unwrap()]),
        2
    );
}

#[test]
fn gradcheck_subcommand_passes() {
    let stdout = run_ok(&["gradcheck", "--samples", "30"]);
    assert!(stdout.contains("max rel err"), "{stdout}");
}

#[test]
fn validation_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();
    run_ok(&["generate", "--out", data_s, "--identities", "1", "--seed", "0"]);
    let real = data.join("surrogate-real");
    let real_s = real.to_str().unwrap();

    // Refusing to overwrite a non-empty directory without --force.
    assert_eq!(run_code(&["generate", "--out", data_s, "--identities", "1"]), 2);

    // Mixed strategy without a ratio.
    assert_eq!(
        run_code(&[
            "train", "--real", real_s, "--assign-folds", "--strategy", "mixed",
            "--synthetic", data.join("synthetic").to_str().unwrap(),
            "--out", tmp.path().join("x").to_str().unwrap(),
        ]),
        2
    );

    // Pretraining without a synthetic dataset.
    assert_eq!(
        run_code(&[
            "train", "--real", real_s, "--assign-folds",
            "--strategy", "pretrain-finetune",
            "--out", tmp.path().join("y").to_str().unwrap(),
        ]),
        2
    );

    // Missing checkpoint directory is a runtime failure, not usage.
    assert_eq!(
        run_code(&[
            "eval", "--checkpoint", tmp.path().join("nope").to_str().unwrap(),
            "--real", real_s, "--assign-folds", "--fold", "0",
            "--out", tmp.path().join("z").to_str().unwrap(),
        ]),
        1
    );
}

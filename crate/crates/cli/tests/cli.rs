//! End-to-end CLI behavior: subcommands, artifacts, and exit codes
//! (0 success, 1 usage, 2 equivalence failure, 3 numerical failure).

use std::path::Path;
use std::process::Command;

fn okreg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_okreg"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const GP_TANH: &str = r#"{
    "task": {"kind": {"gp1d": {}}, "ordering": "as_generated", "seed": 0},
    "kernel": {"random_feature_tanh": {"dim": 100}},
    "learners": ["offline"],
    "hp": {"eta": 0.5, "gamma": 1.0}
}"#;

#[test]
fn gen_writes_dataset_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), GP_TANH);
    let out = dir.path().join("out");
    let status = okreg()
        .args(["gen", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let (train, test) = okreg::tasks::read_dataset_csv(out.join("task.csv")).unwrap();
    assert_eq!(train.data.len(), 40);
    assert_eq!(test.len(), 160);
    assert!(out.join("task.json").exists());
}

#[test]
fn fit_offline_writes_predictor_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), GP_TANH);
    let out = dir.path().join("out");
    let status = okreg()
        .args(["fit", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let records =
        okreg_cli::import_curves(out.join("fit_curve.csv"), okreg_cli::ExportFormat::Csv).unwrap();
    assert!(!records.is_empty());
    let predictor = okreg::io::load_predictor(out.join("predictor.json")).unwrap();
    let xs = ndarray::arr2(&[[0.25, 0.75]]);
    predictor.predict(xs.view()).unwrap();
}

#[test]
fn fit_dump_coeffs_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "task": {"kind": {"gp1d": {}}, "ordering": "as_generated", "seed": 0},
            "kernel": {"random_feature_tanh": {"dim": 100}},
            "learners": ["online_iter_corrected"],
            "hp": {"eta": 0.5, "gamma": 1.0, "gamma_o": 0.01},
            "correction_chunk": 8
        }"#,
    );
    let out = dir.path().join("out");
    let status = okreg()
        .args([
            "fit",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--dump-coeffs",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let c_on = okreg::io::read_matrix_csv(out.join("coeffs_0000_c_on.csv")).unwrap();
    assert_eq!(c_on.nrows(), 8);
    assert!(out.join("coeffs_0004_c_off.csv").exists());
}

#[test]
fn report_passes_on_gp_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), GP_TANH);
    let output = okreg()
        .args(["report", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stdout));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.matches("[PASS]").count(), 8, "{stdout}");
}

#[test]
fn report_degenerate_decay_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "task": {"kind": {"gp1d": {}}, "ordering": "as_generated", "seed": 0},
            "kernel": {"random_feature_tanh": {"dim": 100}},
            "learners": ["offline"],
            "hp": {"eta": 0.5, "gamma": 2.0}
        }"#,
    );
    let output = okreg()
        .args(["report", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("degenerate decay"), "{stdout}");
}

#[test]
fn missing_config_exits_1() {
    let status = okreg()
        .args(["curve", "--config", "/nonexistent.json", "--out", "/tmp/x"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"tasc": {}}"#);
    let status = okreg()
        .args(["report", "--config", config.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn singular_system_exits_3() {
    // Zero spread duplicates the class means; with gamma = 0 the offline
    // system is exactly singular.
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "task": {"kind": {"cluster_classification": {"n_classes": 2, "input_dim": 4, "spread": 0.0, "n_train": 16, "n_test": 8}}, "ordering": "as_generated", "seed": 0},
            "kernel": "linear",
            "learners": ["offline"],
            "hp": {"eta": 0.5, "gamma": 0.0}
        }"#,
    );
    let out = dir.path().join("out");
    let status = okreg()
        .args(["curve", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn curve_json_format_and_seed_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "task": {"kind": {"gp1d": {"n_train": 16, "n_test": 16}}, "ordering": "as_generated", "seed": 0},
            "kernel": {"rbf": {"bandwidth": 0.1}},
            "learners": ["online_true"],
            "hp": {"eta": 0.5, "gamma": 1.0},
            "eval_every": 8
        }"#,
    );
    let out = dir.path().join("out");
    let status = okreg()
        .args([
            "curve",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seeds",
            "3",
            "--format",
            "json",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let records =
        okreg_cli::import_curves(out.join("curves.json"), okreg_cli::ExportFormat::Json).unwrap();
    let seeds: std::collections::BTreeSet<u64> = records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(out.join("summary.json").exists());
}

#[test]
fn ntk_train_writes_metrics_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "task": {"kind": {"cluster_classification": {"n_classes": 4, "input_dim": 8, "spread": 0.2, "n_train": 48, "n_test": 16}}, "ordering": "class_incremental", "seed": 0},
            "kernel": "linear",
            "learners": [{"sgd_mlp": {"hidden": [16], "activation": "Tanh", "schedule": "RefreshPerTask", "correction": "Iterative"}}],
            "hp": {"eta": 0.05, "gamma": 2.0, "gamma_o": 1.0, "block": 4},
            "correction_chunk": 12,
            "eval_every": 4
        }"#,
    );
    let out = dir.path().join("out");
    let status = okreg()
        .args(["ntk-train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = std::fs::read_to_string(out.join("metrics_seed0.csv")).unwrap();
    assert!(metrics.starts_with("step,task_id,epoch,train_mse,test_mse,test_accuracy"));
    assert!(out.join("weights_seed0_layer0.csv").exists());
    assert!(out.join("weights_seed0_layer1.csv").exists());
}

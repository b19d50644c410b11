use std::path::Path;

use linres::cli::{run, EXIT_ALL_RESTARTS_FAILED, EXIT_CONFIG, EXIT_VIOLATION};

const SMALL: &str = r#"
seed = 4
[optimizer]
n_modes = 4
restarts = 3
[reservoir]
train_steps = 1200
test_steps = 400
washout = 200
[theorem]
instances = 2
n_max = 5
steps = 1200
washout = 200
[benchmark]
sweep_values = [3]
trials = 2
[benchmark.settings]
train_steps = 800
test_steps = 300
washout = 200
[benchmark.sensitivity]
epsilons = [0.0, 1.0]
trials = 2
[benchmark.beta_study]
beta1_values = [1e-4]
beta2_values = [0.0, 0.1]
trials = 1
"#;

fn invoke(dir: &Path, extra: &[&str]) -> i32 {
    let config = dir.join("small.toml");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    let mut args = vec![
        "linres".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        dir.join("out").display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    run(args)
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join("out").join(name)).unwrap()
}

#[test]
fn every_subcommand_writes_its_artifacts() {
    let cases: [(&str, &[&str]); 6] = [
        ("optimize", &["optimization.json", "fit_train.csv", "fit_test.csv", "optimized_topology.json"]),
        ("simulate", &["states.csv", "input.csv", "topology.json"]),
        ("theorem-check", &["theorem_check.json"]),
        ("sweep", &["sweep.csv", "sweep_summary.json", "sweep_trials.jsonl"]),
        ("sensitivity", &["sensitivity.csv", "sensitivity.json"]),
        ("beta-study", &["beta_study.csv", "beta_study.json"]),
    ];
    for (command, files) in cases {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(invoke(dir.path(), &[command]), 0, "{command}");
        for f in files.iter().chain(&["manifest.json"]) {
            assert!(dir.path().join("out").join(f).is_file(), "{command}: {f}");
        }
        let manifest: serde_json::Value = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
        assert_eq!(manifest["command"], command);
        assert_eq!(manifest["seed"], 4);
    }
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(invoke(a.path(), &["optimize"]), 0);
    assert_eq!(invoke(b.path(), &["optimize", "--jobs", "1"]), 0);
    for f in ["optimization.json", "fit_train.csv", "fit_test.csv", "manifest.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    assert_eq!(invoke(c.path(), &["optimize", "--seed", "5"]), 0);
    assert_ne!(read(a.path(), "optimization.json"), read(c.path(), "optimization.json"));
}

#[test]
fn existing_artifacts_need_force() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke(dir.path(), &["simulate"]), 0);
    let before = read(dir.path(), "states.csv");
    assert_eq!(invoke(dir.path(), &["simulate"]), EXIT_VIOLATION);
    assert_eq!(invoke(dir.path(), &["simulate", "--force"]), 0);
    assert_eq!(read(dir.path(), "states.csv"), before);
}

#[test]
fn config_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml").display().to_string();
    assert_eq!(run(["linres", "--config", &missing, "optimize"]), EXIT_CONFIG);
    assert_eq!(invoke(dir.path(), &["optimize", "--set", "optimizer.lambda_init_low=1.0"]), EXIT_CONFIG);
    assert_eq!(invoke(dir.path(), &["sweep", "--set", "benchmark.sweep_values=[]"]), EXIT_CONFIG);
    assert_eq!(invoke(dir.path(), &["optimize", "--set", "optimizer.unknown=1"]), EXIT_CONFIG);
    assert_eq!(run(["linres", "no-such-command"]), EXIT_CONFIG);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn failed_restarts_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        invoke(dir.path(), &["optimize", "--set", "optimizer.max_inner_iters=0"]),
        EXIT_ALL_RESTARTS_FAILED
    );
}

#[test]
fn theorem_self_test_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke(dir.path(), &["theorem-check", "--self-test"]), EXIT_VIOLATION);
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path(), "theorem_check.json")).unwrap();
    assert!(report["violations"].as_u64().unwrap() > 0);
}

use std::process::Command;

use hjcell_cli::{compare_runs, run_scenario, CompareError, ConfigError, RunOptions, ScenarioConfig};

fn opts(root: &std::path::Path) -> RunOptions {
    RunOptions { out_root: Some(root.to_path_buf()), ..RunOptions::default() }
}

const QUARTIC: &str = r#"
task = "effective"
p_max = 3.0
[environment]
kind = "periodic"
period = 1.0
diffusion = "1"
hamiltonian = "(p^2 - 1)^2"
[levels]
lambda_lo = 0.01
lambda_hi = 9.0
n_lambda = 40
"#;

#[test]
fn x_independent_effective_records_no_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml(QUARTIC).unwrap();
    let (_, m) = run_scenario(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(m.summary["gap_count"], 0);
    assert!(m.summary["max_deviation_from_h"].as_f64().unwrap() <= 1e-6);
    for name in ["effective.csv", "gaps.json", "config.toml"] {
        assert!(m.files.iter().any(|f| f.name == name), "{name} missing from manifest");
    }
}

#[test]
fn identical_configs_reproduce_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml(QUARTIC).unwrap();
    let (da, ma) = run_scenario(&cfg, &opts(a.path())).unwrap();
    let (db, mb) = run_scenario(&cfg, &opts(b.path())).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.files, mb.files);
    let report = compare_runs(&da, &db, 0.0).unwrap();
    assert_eq!(report.max_deviation(), 0.0);
    assert!(report.within_tolerance());
}

#[test]
fn halving_tolerances_moves_results_little() {
    let text = r#"
task = "effective"
[environment]
kind = "benchmark"
name = "quadratic_cosine"
[levels]
lambda_lo = 1.5
lambda_hi = 6.0
n_lambda = 12
"#;
    let root = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml(text).unwrap();
    let (da, _) = run_scenario(&cfg, &opts(root.path())).unwrap();
    let fine = RunOptions { tol_scale: Some(0.5), ..opts(root.path()) };
    let (db, _) = run_scenario(&cfg, &fine).unwrap();
    assert_ne!(da, db);
    let coarse_tol = cfg.tolerance.ode;
    let report = compare_runs(&da, &db, 10.0 * coarse_tol).unwrap();
    assert!(report.within_tolerance(), "{report:?}");
}

#[test]
fn branch_catalog_is_cached() {
    let text = r#"
task = "branches"
[environment]
kind = "benchmark"
name = "quadratic_cosine"
[levels]
lambda_lo = 1.5
lambda_hi = 3.0
n_lambda = 4
"#;
    let root = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml(text).unwrap();
    let (_, first) = run_scenario(&cfg, &opts(root.path())).unwrap();
    let (_, second) = run_scenario(&cfg, &opts(root.path())).unwrap();
    assert_eq!(first.summary["branch_cache"], "miss");
    assert_eq!(second.summary["branch_cache"], "hit");
    assert_eq!(first.summary["branch_count"], 8);
    assert_eq!(first.files, second.files);
}

#[test]
fn different_tasks_do_not_compare() {
    let root = tempfile::tempdir().unwrap();
    let env = "[environment]\nkind = \"benchmark\"\nname = \"quadratic_cosine\"\n";
    let a = ScenarioConfig::from_toml(&format!("task = \"envelopes\"\n{env}")).unwrap();
    let b = ScenarioConfig::from_toml(&format!("task = \"validate\"\n{env}")).unwrap();
    let (da, _) = run_scenario(&a, &opts(root.path())).unwrap();
    let (db, mb) = run_scenario(&b, &opts(root.path())).unwrap();
    assert!(mb.summary["violations"].as_array().unwrap().is_empty());
    let err = compare_runs(&da, &db, 1e-9).unwrap_err();
    assert!(matches!(err.downcast_ref::<CompareError>(), Some(CompareError::MismatchedTask { .. })));
}

#[test]
fn ergodic_seeds_agree_within_confidence() {
    let text = r#"
task = "ergodic"
[environment]
kind = "random"
base = "p^2"
window = [-20.0, 220.0]
generator = { generator = "random_phase_trig", amplitudes = [0.6, 0.4], frequencies = [1.0, 2.6457513] }
[ergodic]
lambdas = [1.5, 3.0]
seeds = 6
window = 200.0
burn_in = 15.0
"#;
    let root = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml(text).unwrap();
    let (da, _) = run_scenario(&cfg, &opts(root.path())).unwrap();
    let (db, _) = run_scenario(&cfg, &RunOptions { seed: Some(1000), ..opts(root.path()) }).unwrap();
    let read = |d: &std::path::Path| -> Vec<Vec<f64>> {
        std::fs::read_to_string(d.join("ergodic.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (ra, rb) = (read(&da), read(&db));
    assert_eq!(ra.len(), 4);
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x[1] - y[1]).abs() <= 3.0 * (x[2] + y[2]), "{x:?} vs {y:?}");
    }
}

#[test]
fn missing_period_fails_with_the_field_name() {
    let text = QUARTIC.replace("period = 1.0\n", "");
    match ScenarioConfig::from_toml(&text) {
        Err(ConfigError::Missing(field)) => assert_eq!(field, "environment.period"),
        other => panic!("expected a missing-field error, got {other:?}"),
    }
}

#[test]
fn binary_reports_config_errors_with_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, QUARTIC.replace("period = 1.0\n", "")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hjcell"))
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("environment.period"));
}

#[test]
fn binary_runs_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.toml");
    std::fs::write(&path, "task = \"envelopes\"\n[environment]\nkind = \"benchmark\"\nname = \"double_well\"\nparameter = 2.0\n").unwrap();
    let run = |seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_hjcell"))
            .args(["run", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path())
            .args(["--workers", "1", "--seed", seed])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap().lines().next().unwrap().to_string()
    };
    let a = run("1");
    let b = run("2");
    let out = Command::new(env!("CARGO_BIN_EXE_hjcell")).args(["compare", &a, &b]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use minqds_cli::config::LambdaEntry;
use minqds_cli::{compare_report, configured_stages, run_scenario, write_artifacts, ScenarioConfig, Stage, DEMO_SCENARIO};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn minqds(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_minqds"));
    for k in ["MINQDS_CONFIG", "MINQDS_SEED", "MINQDS_OUT", "MINQDS_LAMBDA", "MINQDS_TOL"] {
        cmd.env_remove(k);
    }
    cmd.args(args).envs(envs.iter().copied()).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demo_exits_zero_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = minqds(&["demo", "--out", path_str(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ConservativeAtTol"), "{stdout}");
    for f in ["report.json", "condition_a.csv", "defect_summary.csv", "resolve_summary.csv", "evolution_norms.csv"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn refuted_hypothesis_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("pure_loss_certify.toml");
    let out = minqds(&["certify", "--config", path_str(&cfg), "--out", path_str(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("REFUTED"));
}

#[test]
fn unknown_key_exits_one_with_location() {
    let cfg = scenario("invalid_unknown_key.toml");
    let out = minqds(&["run", "--config", path_str(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_ponts") && err.contains("line"), "{err}");
}

#[test]
fn missing_config_exits_one() {
    let out = minqds(&["defect"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn env_overrides_lambda_and_out() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("env");
    let out = minqds(&["defect"], &[("MINQDS_CONFIG", path_str(&scenario("demo_scalar.toml"))), ("MINQDS_LAMBDA", "3,4"), ("MINQDS_OUT", path_str(&out_dir))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("defect_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(summary.contains("3.0000000000000000e0") && summary.contains("4.0000000000000000e0"), "{summary}");
}

#[test]
fn repeated_runs_give_identical_artifacts() {
    let cfg = ScenarioConfig::parse(DEMO_SCENARIO).unwrap();
    let stages = configured_stages(&cfg);
    let a = run_scenario(&cfg, &stages, Path::new(".")).unwrap();
    let b = run_scenario(&cfg, &stages, Path::new(".")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let fa = write_artifacts(&a, &tmp.path().join("a")).unwrap();
    let fb = write_artifacts(&b, &tmp.path().join("b")).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        if x.extension().is_some_and(|e| e == "csv") {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
    assert!(compare_report(&a, &b).unwrap().is_empty());
}

#[test]
fn compare_across_lambda_keeps_verdicts() {
    let mut cfg = ScenarioConfig::parse(DEMO_SCENARIO).unwrap();
    cfg.resolvent.lambdas = vec![LambdaEntry::Value(1.0)];
    let a = run_scenario(&cfg, &[Stage::CheckA, Stage::Defect], Path::new(".")).unwrap();
    cfg.resolvent.lambdas = vec![LambdaEntry::Value(2.0)];
    let b = run_scenario(&cfg, &[Stage::CheckA, Stage::Defect], Path::new(".")).unwrap();
    let d = compare_report(&a, &b).unwrap();
    assert!(d.verdict_changes.is_empty(), "{:?}", d.verdict_changes);
    assert!(d.get("lambda_0").is_some());
}

#[test]
fn compare_across_refinement_reports_ratio() {
    let src = std::fs::read_to_string(scenario("reflected_bm.toml")).unwrap();
    let coarse = ScenarioConfig::parse(&src.replace("n_points = 64", "n_points = 16")).unwrap();
    let fine = ScenarioConfig::parse(&src.replace("n_points = 64", "n_points = 32")).unwrap();
    let stages = [Stage::CheckA, Stage::Certify];
    let a = run_scenario(&coarse, &stages, Path::new(".")).unwrap();
    let b = run_scenario(&fine, &stages, Path::new(".")).unwrap();
    let d = compare_report(&a, &b).unwrap();
    let h = d.get("h").expect("grid step differs");
    assert!((h.ratio.unwrap() - 2.0).abs() < 1e-12);
    assert!(d.get("b_estimate").is_some());
}

#[test]
fn reports_of_different_kinds_do_not_compare() {
    let demo = ScenarioConfig::parse(DEMO_SCENARIO).unwrap();
    let birth = ScenarioConfig::load(&scenario("birth_poisson.toml")).unwrap();
    let a = run_scenario(&demo, &[Stage::CheckA], Path::new(".")).unwrap();
    let b = run_scenario(&birth, &[Stage::CheckA], Path::new(".")).unwrap();
    assert!(compare_report(&a, &b).is_err());
}

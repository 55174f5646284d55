use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_platform-design"));
    c.env_remove("PLATFORM_DESIGN_SEED");
    c
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.extend(["--format", "json"]);
    let out = run(&a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing {key} in {v}"))
}

#[test]
fn adjust_sidak_threshold() {
    let v = json(&["adjust", "--metric", "fwer", "--alpha", "0.05", "--rho", "0"]);
    assert!((f(&v, "p_threshold") - 0.0253).abs() < 1e-4);
    assert!((f(&v, "critical_value") - 2.2365).abs() < 1e-3);
}

#[test]
fn adjust_fmer_at_independence() {
    let v = json(&["adjust", "--metric", "fmer", "--alpha", "0.0025", "--rho", "0"]);
    assert!((f(&v, "critical_value") - 1.960).abs() < 1e-3);
}

#[test]
fn adjust_arm_level_matches_direct_rho() {
    let arm = json(&["adjust", "--rho-ab-a", "0.3", "--rho-ab-b", "0.5", "--n-a", "40", "--n-b", "40", "--n-ab", "20"]);
    let direct = json(&["adjust", "--rho", &f(&arm, "rho").to_string()]);
    assert!((f(&arm, "critical_value") - f(&direct, "critical_value")).abs() < 1e-6);
}

#[test]
fn adjust_platform_mode() {
    let v = json(&["adjust", "--k", "2", "--metric", "fwer"]);
    assert_eq!(v["z_correlation"].as_array().map(Vec::len), Some(4));
    assert!(f(&v, "critical_value") > 2.2365);
}

#[test]
fn adjust_rejects_bad_alpha() {
    let out = run(&["adjust", "--metric", "fwer", "--alpha", "1.5", "--rho", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--alpha"));
}

#[test]
fn adjust_human_output_has_six_digits() {
    let out = run(&["adjust", "--rho", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("critical_value") && l.ends_with("2.23648")), "{text}");
}

#[test]
fn design_encorafenib_row() {
    let v = json(&[
        "design", "--delta", "0.663", "--synergy", "1.161", "--rho-ab-a", "0.626", "--rho-ab-b", "0.660", "--metric",
        "fwer",
    ]);
    for (key, want) in [("p_A", 0.445), ("p_B", 0.450), ("p_AB", 0.105)] {
        assert!((f(&v, key) - want).abs() <= 0.01, "{key} = {}", f(&v, key));
    }
    let n = f(&v, "n_star");
    assert!((n - 97.0).abs() <= 9.7, "N* = {n}");
}

#[test]
fn design_closed_form_case() {
    let v = json(&["design", "--delta", "0.5", "--rho-ab-a", "0", "--synergy", "1"]);
    for (key, want) in [("p_A", 0.4142), ("p_B", 0.2929), ("p_AB", 0.2929)] {
        assert!((f(&v, key) - want).abs() < 1e-3, "{key} = {}", f(&v, key));
    }
}

#[test]
fn design_is_deterministic() {
    let args = ["design", "--delta", "0.4", "--synergy", "1.2", "--rho-ab-a", "0.3", "--rho-ab-b", "0.3", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn design_budget_exit_code() {
    let out = run(&["design", "--delta", "0.05", "--cap", "200", "--nsim", "1000"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn design_requires_delta() {
    let out = run(&["design"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--delta"));
}

#[test]
fn seed_precedence() {
    let args = ["design", "--delta", "0.5", "--nsim", "2000", "--format", "json"];
    let env: Value = serde_json::from_slice(&bin().args(args).env("PLATFORM_DESIGN_SEED", "77").output().unwrap().stdout).unwrap();
    assert_eq!(env["seed"], 77);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--seed", "5"]);
    let flag: Value =
        serde_json::from_slice(&bin().args(&with_flag).env("PLATFORM_DESIGN_SEED", "77").output().unwrap().stdout).unwrap();
    assert_eq!(flag["seed"], 5);
}

#[test]
fn config_file_precedence_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"metric": "fmer", "alpha": 0.01, "rho": 0.5, "format": "json"}"#).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let out = run(&["adjust", "--config", cfg_s]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metric"], "fmer");
    assert_eq!(f(&v, "alpha"), 0.01);
    let out = run(&["adjust", "--config", cfg_s, "--alpha", "0.02"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(f(&v, "alpha"), 0.02);

    std::fs::write(&cfg, r#"{"alpah": 0.01}"#).unwrap();
    let out = run(&["adjust", "--config", cfg_s]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn estimate_synthetic_fixture() {
    let input = data("shifted.csv");
    let v = json(&[
        "estimate", "--input", input.to_str().unwrap(), "--drug-a", "ctrl", "--drug-b", "mono", "--combo", "combo",
    ]);
    assert!((f(&v, "s_hat") - 2.0).abs() < 1e-9);
    assert!((f(&v, "delta_B") - 0.5).abs() < 1e-9);
    assert_eq!(v["screened_out"], false);
    assert_eq!(v["n_A"], 12);
}

#[test]
fn estimate_missing_column() {
    let input = data("shifted.csv");
    let out = run(&[
        "estimate", "--input", input.to_str().unwrap(), "--drug-a", "ctrl", "--drug-b", "mono", "--combo", "combo",
        "--response-col", "tsr",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tsr"));
}

#[test]
fn estimate_roles_flags_screened_trials() {
    let (input, roles) = (data("noisy.csv"), data("roles.csv"));
    let v = json(&[
        "estimate", "--input", input.to_str().unwrap(), "--roles", roles.to_str().unwrap(), "--thresholds",
        "--replications", "20000",
    ]);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["screened_out"], false);
    assert!(f(&rows[0], "p_threshold_fwer") > 0.0253);
    assert_eq!(rows[1]["screened_out"], true);
    assert!(rows[1].get("p_threshold_fwer").is_none());
}

#[test]
fn simulate_error_curves_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("curves.csv");
    let out = run(&[
        "simulate", "--study", "error-curves", "--replications", "2000", "--out", out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let b = header.iter().position(|h| *h == "baseline").unwrap();
    let m = header.iter().position(|h| *h == "metric").unwrap();
    let mut n = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let want = match cells[m] {
            "fwer" => "0.0975",
            "fmer" => "0.0025",
            _ => "0.000625",
        };
        assert_eq!(cells[b], want);
        n += 1;
    }
    assert_eq!(n, 91 * 4 * 3);
}

#[test]
fn simulate_design_surface_rows() {
    let out = run(&["simulate", "--study", "design-surface", "--replications", "2000", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 84);
}

#[test]
fn simulate_unknown_study() {
    assert_eq!(run(&["simulate", "--study", "nope"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--study", "thresholds", "--replications", "3000", "--seed", "4"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

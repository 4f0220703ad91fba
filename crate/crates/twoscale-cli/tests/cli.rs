//! End-to-end CLI tests driving the compiled binary: exit codes, output
//! files, and byte-reproducibility of sweep CSVs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_twoscale")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twoscale_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_PROBLEM: &str = r#"{
  "dim": 1,
  "coefficient": { "family": "cosine_scalar", "base": 2.0, "amplitude": 1.0 },
  "damping": { "g_per": { "family": "constant", "value": 1.0 }, "c_star": 0.0 },
  "epsilon": 0.125,
  "r": 1.0,
  "horizon": 0.25,
  "domain": { "min": [0.0], "max": [1.0] },
  "forcing": { "family": "zero" },
  "v0": { "family": "product_sine", "amplitude": 1.0 },
  "v1": { "family": "zero" },
  "resolution": {
    "cell_n": 64,
    "cell_time_steps": 40,
    "fine_space_factor": 12.0,
    "fine_dt_safety": 10.0,
    "hom_n": 128,
    "hom_time_steps": 256,
    "probe_resolution": 64,
    "solver_tol": 1e-10
  }
}"#;

#[test]
fn validate_accepts_admissible_config() {
    let dir = temp_dir("validate_ok");
    let config = write_config(&dir, "problem.json", SMALL_PROBLEM);
    let out = run(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("out/validation.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn validate_rejects_oversized_drift_with_exit_code_2() {
    let dir = temp_dir("validate_bad");
    let bad = SMALL_PROBLEM
        .replace("\"c_star\": 0.0", "\"c_star\": 50.0")
        .replace("\"r\": 1.0", "\"r\": 2.0");
    let config = write_config(&dir, "problem.json", &bad);
    let out = run(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_config_exits_2() {
    let dir = temp_dir("malformed");
    let config = write_config(&dir, "problem.json", "{ not json");
    let out = run(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cell_and_ahom_export_their_files() {
    let dir = temp_dir("cell_ahom");
    let config = write_config(&dir, "problem.json", SMALL_PROBLEM);
    let out = run(&[
        "cell",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("cells").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("cells/cell_k0.json").exists());
    assert!(dir.join("cells/cell_k0.csv").exists());

    let out = run(&[
        "ahom",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("ahom").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("ahom/ahom.csv")).unwrap();
    assert!(csv.starts_with("t,a00,ellipticity_margin,skew_frobenius"));
    // Harmonic mean of the cosine profile: 1/2.
    let value: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 0.5).abs() < 1e-3, "a_hom = {value}");
    assert!(dir.join("ahom/ahom_report.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn solvers_export_diagnostics_and_snapshots() {
    let dir = temp_dir("solvers");
    let config = write_config(&dir, "problem.json", SMALL_PROBLEM);
    for cmd in ["solve-fine", "solve-hom"] {
        let out_dir = dir.join(cmd);
        let out = run(&[
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out_dir.join("diagnostics.csv").exists());
        assert!(out_dir.join("snapshots.csv").exists());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn drift_regime_solver_exports_h_residual() {
    let dir = temp_dir("drift");
    let drift = SMALL_PROBLEM
        .replace("\"c_star\": 0.0", "\"c_star\": 1.0")
        .replace("\"r\": 1.0", "\"r\": 2.0");
    let config = write_config(&dir, "problem.json", &drift);
    let out = run(&[
        "solve-hom",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("out/h_residual.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

const SMALL_SWEEP: &str = r#"{
  "base": {
    "dim": 1,
    "coefficient": { "family": "cosine_scalar", "base": 2.0, "amplitude": 1.0 },
    "damping": { "g_per": { "family": "constant", "value": 1.0 }, "c_star": 0.0 },
    "epsilon": 0.125,
    "r": 1.0,
    "horizon": 0.25,
    "domain": { "min": [0.0], "max": [1.0] },
    "forcing": { "family": "zero" },
    "v0": { "family": "product_sine", "amplitude": 1.0 },
    "v1": { "family": "zero" },
    "resolution": {
      "cell_n": 64,
      "cell_time_steps": 40,
      "fine_space_factor": 12.0,
      "fine_dt_safety": 10.0,
      "hom_n": 128,
      "hom_time_steps": 256,
      "probe_resolution": 64,
      "solver_tol": 1e-10
    }
  },
  "epsilons": [0.125, 0.0625, 0.03125],
  "r_values": [1.0],
  "c_star_values": [0.0],
  "seed": 42,
  "workers": 2,
  "pairings": false
}"#;

#[test]
fn sweep_writes_deterministic_outputs_and_rates_fit() {
    let dir = temp_dir("sweep");
    let config = write_config(&dir, "sweep.json", SMALL_SWEEP);
    let out_a = dir.join("out_a");
    let out_b = dir.join("out_b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(out_a.join("summary.csv")).unwrap();
    let b = std::fs::read(out_b.join("summary.csv")).unwrap();
    assert_eq!(a, b, "summary.csv not byte-identical");
    assert!(out_a.join("slopes.csv").exists());
    assert!(out_a.join("case_000.json").exists());
    assert!(out_a.join("case_002.json").exists());

    // Fit a rate from the summary.
    let rates_config = write_config(
        &dir,
        "rates.json",
        &format!(
            r#"{{ "summary_csv": "{}", "metric": "sup_l2_diff" }}"#,
            out_a.join("summary.csv").display()
        ),
    );
    let out = run(&[
        "rates",
        "--config",
        rates_config.to_str().unwrap(),
        "--out",
        dir.join("rates_out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rates_csv = std::fs::read_to_string(dir.join("rates_out/rates.csv")).unwrap();
    let slope: f64 = rates_csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(slope > 0.4, "homogenization distance should shrink with eps, slope {slope}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn corrector_emits_metric_table() {
    let dir = temp_dir("corrector");
    let config = write_config(&dir, "problem.json", SMALL_PROBLEM);
    let out = run(&[
        "corrector",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("out/metrics.csv")).unwrap();
    assert!(csv.starts_with("epsilon,r,c_star,metric,value"));
    for metric in ["corrector_err", "uncorrected_err", "sup_l2_diff", "two_scale_flux_gap"] {
        assert!(csv.contains(metric), "missing metric {metric}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn rates_with_too_few_points_exits_2() {
    let dir = temp_dir("rates_short");
    let summary = write_config(
        &dir,
        "summary.csv",
        "epsilon,r,c_star,status,path,metric,value\n\
         1.25e-1,1e0,0e0,ok,elliptic,m,1e-1\n\
         6.25e-2,1e0,0e0,ok,elliptic,m,5e-2\n",
    );
    let rates_config = write_config(
        &dir,
        "rates.json",
        &format!(
            r#"{{ "summary_csv": "{}", "metric": "m" }}"#,
            summary.display()
        ),
    );
    let out = run(&[
        "rates",
        "--config",
        rates_config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

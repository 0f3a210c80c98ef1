use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppap::io::{read_csv, CSV_SCHEMA};
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], out: &Path) -> String {
    let o = run(args, out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn scalar_decay_reaches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("scalar_decay.json");
    run_ok(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    let s = json(&dir.path().join("solve.json"));
    // x(t) = e^{-t} φ(0) with φ(0) = 1
    let x1 = num(&s["final_value"][0]);
    assert!((x1 - (-1.0f64).exp()).abs() < 1e-6, "{x1}");

    let src = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(src.starts_with(&format!("{CSV_SCHEMA}\n")));
    let (header, rows) = read_csv(&src).unwrap();
    assert_eq!(header, ["t", "side", "c1"]);
    let last = rows.last().unwrap();
    assert_eq!(last[2].parse::<f64>().unwrap(), x1);
}

#[test]
fn impulse_jump_and_left_limit_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("scalar_impulse.json");
    run_ok(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    let s = json(&dir.path().join("solve.json"));
    let imp = &s["impulses"][0];
    assert_eq!(num(&imp["time"]), 1.0);
    let (left, right) = (num(&imp["left"][0]), num(&imp["right"][0]));
    assert!((right - left - 0.5).abs() < 1e-12);
    assert!(num(&imp["jump_residual"]) < 1e-12);

    // the CSV row at t = 1 marked "left" is the value stored at the node
    let src = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let (_, rows) = read_csv(&src).unwrap();
    let at_one: Vec<_> = rows
        .iter()
        .filter(|r| r[0].parse::<f64>().unwrap() == 1.0)
        .collect();
    assert_eq!(at_one.len(), 2);
    assert_eq!(at_one[0][1], "left");
    assert_eq!(at_one[0][2].parse::<f64>().unwrap(), left);
    assert_eq!(at_one[1][2].parse::<f64>().unwrap(), right);
}

#[test]
fn validation_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--config", "/nonexistent/run.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["code"], 2);
    assert!(err["message"].as_str().unwrap().contains("nonexistent"));

    let o = run(&["solve", "--bogus-flag"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["code"], 2);

    let cfg = config("scalar_decay.json");
    let o = run(
        &["solve", "--config", cfg.to_str().unwrap(), "--lambda", "-3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn expansive_problem_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("contraction_k110.json");
    let o = run(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["code"], 3);
    assert!(err["message"].as_str().unwrap().contains("1.1"));
}

#[test]
fn reports_are_byte_identical_for_equal_seeds() {
    let cfg = config("contraction_k025.json");
    let args = [
        "check-hypotheses",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--samples",
        "1000",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = run_ok(&args, a.path());
    let out_b = run_ok(&args, b.path());
    assert_eq!(out_a, out_b);
    let ja = std::fs::read(a.path().join("hypotheses.json")).unwrap();
    let jb = std::fs::read(b.path().join("hypotheses.json")).unwrap();
    assert_eq!(ja, jb);

    let c = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "check-hypotheses",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "6",
            "--samples",
            "1000",
        ],
        c.path(),
    );
    assert_ne!(std::fs::read(c.path().join("hypotheses.json")).unwrap(), ja);
}

#[test]
fn heat_hypothesis_check_reports_both_margins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("heat_scenario.json");
    let line = run_ok(
        &[
            "check-hypotheses",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "1",
            "--samples",
            "1000",
        ],
        dir.path(),
    );
    let summary: Value = serde_json::from_str(line.trim()).unwrap();
    assert!(num(&summary["contraction_margin"]) > 0.0);
    assert!(num(&summary["growth_margin"]) > 0.0);
    let h = json(&dir.path().join("hypotheses.json"));
    assert_eq!(h["heat"]["chain_holds"], true);
    assert_eq!(h["heat"]["p2"].as_array().unwrap().len(), 11);
}

#[test]
fn heat_demo_keeps_dirichlet_boundary() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["heat-demo", "--seed", "2"], dir.path());
    let h = json(&dir.path().join("heat.json"));
    assert_eq!(num(&h["boundary_max"]), 0.0);
    assert_eq!(h["bounds"]["chain_holds"], true);
    let src = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let (header, _) = read_csv(&src).unwrap();
    assert_eq!(header, ["t", "y", "z"]);
}

/// Largest `Σ_n |Δc_n|` over all rows, which bounds the sup-norm difference in space.
fn spectral_sup_difference(coarse: &Path, fine: &Path) -> f64 {
    let read = |p: &Path| {
        read_csv(&std::fs::read_to_string(p.join("trajectory.csv")).unwrap())
            .unwrap()
            .1
    };
    let (a, b) = (read(coarse), read(fine));
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(&b)
        .map(|(ra, rb)| {
            assert_eq!(ra[..2], rb[..2]);
            let ca: Vec<f64> = ra[2..].iter().map(|v| v.parse().unwrap()).collect();
            rb[2..]
                .iter()
                .enumerate()
                .map(|(i, v)| (v.parse::<f64>().unwrap() - ca.get(i).copied().unwrap_or(0.0)).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[test]
fn doubling_heat_modes_changes_solution_below_tolerance() {
    let cfg = config("heat_scenario.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(
        &["solve", "--config", cfg.to_str().unwrap(), "--modes", "64"],
        a.path(),
    );
    run_ok(
        &["solve", "--config", cfg.to_str().unwrap(), "--modes", "128"],
        b.path(),
    );
    let d = spectral_sup_difference(a.path(), b.path());
    assert!(d < 1e-6, "{d}");
}

#[test]
fn analysis_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("pap_sine.json");
    run_ok(
        &["pap-analyze", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(dir.path().join("pap.json").exists());

    let cfg = config("sequence_integers.json");
    run_ok(
        &["sequence-analyze", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    let s = json(&dir.path().join("sequence.json"));
    assert!(s.get("count_bound").is_some());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liouville-lattice"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lambda_reports_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lambda", "--alpha", "2", "--f", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("lhs 0.606531 rhs 0.606531"));
    let report = json(&dir.path().join("report.json"));
    let lhs = report["check"]["lhs"].as_f64().unwrap();
    let rhs = report["check"]["rhs"].as_f64().unwrap();
    assert!((lhs - (-0.5f64).exp()).abs() < 1e-15 && (lhs - rhs).abs() < 1e-12);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["subcommand"], "lambda");
    assert_eq!(manifest["pass"], true);
}

#[test]
fn size_guard_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["identity", "--nx", "16", "--ny", "16", "--nt", "17"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size guard"));
}

#[test]
fn unknown_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["nonsense"], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[lattice\nnx = 3").unwrap();
    let out = run(&["detk", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(3));
    fs::write(&cfg, "[couplings]\ng = -1.0\n").unwrap();
    let out = run(&["detk", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn tolerance_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // the continuum kernel is not the exact lattice Green function
    let out = run(&["identity", "--variant", "continuum", "--draws", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("manifest.json"))["pass"], false);
}

#[test]
fn identity_and_detk_pass_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["identity"], &dir.path().join("i")).status.code(), Some(0));
    assert_eq!(run(&["identity", "--sources", "special", "--nt", "12"], &dir.path().join("s")).status.code(), Some(0));
    assert_eq!(run(&["detk", "--b", "1.5"], &dir.path().join("d")).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("d/detk.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn mc_outputs_are_deterministic_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["mc-liouville", "--nx", "4", "--ny", "4", "--sweeps", "3000", "--thermalization", "500", "--seed", "11"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&args, &a).status.code(), Some(0));
    assert_eq!(run(&args, &b).status.code(), Some(0));
    let csv_a = fs::read(a.join("observables.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("observables.csv")).unwrap());
    let header = String::from_utf8_lossy(&csv_a).lines().next().unwrap().to_string();
    assert_eq!(header, "observable,pair,mean,stderr,tau_int");

    // the manifest alone reproduces the run
    let manifest = json(&a.join("manifest.json"));
    let cfg = dir.path().join("rerun.toml");
    fs::write(&cfg, manifest["config_toml"].as_str().unwrap()).unwrap();
    let c = dir.path().join("c");
    assert_eq!(run(&["mc-liouville", "--config", cfg.to_str().unwrap()], &c).status.code(), Some(0));
    assert_eq!(csv_a, fs::read(c.join("observables.csv")).unwrap());
    let digest = |p: &Path| json(&p.join("manifest.json"))["inputs_digest"].clone();
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn kernel_walk_and_compare_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["kernel"], &dir.path().join("k")).status.code(), Some(0));
    assert_eq!(run(&["walk", "--walkers", "20000"], &dir.path().join("w")).status.code(), Some(0));
    let out = run(
        &["compare", "--nx", "4", "--ny", "4", "--sweeps", "20000", "--t-list", "1,100,10000"],
        &dir.path().join("c"),
    );
    assert!(matches!(out.status.code(), Some(0 | 1)));
    let report = json(&dir.path().join("c/report.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(report["bound_monotone"], true);
}

#[test]
fn verify_all_lists_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-all"], dir.path());
    let reports = json(&dir.path().join("report.json"));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 11);
    let all_pass = reports.iter().all(|r| r["pass"] == true);
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
    for r in reports {
        assert!(r["metric"].as_f64().is_some());
    }
}

//! End-to-end runs of the `katokit` binary and of the manifest runner.

use std::process::Command;

use katokit::cli::{self, ExperimentManifest, RunOptions};

fn katokit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_katokit")).args(args).output().expect("binary runs")
}

fn scratch_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("katokit-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn reports_are_deterministic_sequential_and_parallel() {
    let m = cli::battery("semigroup").unwrap();
    let a = cli::run(&m, &RunOptions::default());
    let b = cli::run(&m, &RunOptions::default());
    let par = cli::run(&m, &RunOptions { parallel: true, ..RunOptions::default() });
    assert_eq!(a.deterministic_json().unwrap(), b.deterministic_json().unwrap());
    let strip = |s: String| s.replace("\"parallel\": true", "\"parallel\": false");
    assert_eq!(a.deterministic_json().unwrap(), strip(par.deterministic_json().unwrap()));
    assert_eq!(a.exit_code(), 0);
}

#[test]
fn stochastic_checks_repeat_under_a_fixed_seed() {
    let text = "manifold = \"circle\"\npotential = \"cos\"\nseed = 9\n[[check]]\nkind = \"feynman-kac\"\nt = 0.5\nstep = 0.01\npaths = 2000\n";
    let m = ExperimentManifest::parse(text).unwrap();
    let a = cli::run(&m, &RunOptions::default()).deterministic_json().unwrap();
    let b = cli::run(&m, &RunOptions::default()).deterministic_json().unwrap();
    let c = cli::run(&m, &RunOptions { seed: Some(10), ..RunOptions::default() }).deterministic_json().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn circle_kernel_check_exits_zero() {
    let out = katokit(&["kernel-check", "--manifold", "circle"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "PASS");
    assert_eq!(report["checks"][0]["kind"], "kernel-check");
    assert!(report["checks"][0]["inequality"].is_string());
    assert_eq!(report["checks"][0]["label"], "numerical evidence");
}

#[test]
fn inverse_square_on_three_space_is_rejected() {
    let potential = "radialpower:beta=2:center=0,0,0";
    let out = katokit(&["is-kato", "--manifold", "euclidean:3", "--potential", potential]);
    assert_eq!(out.status.code(), Some(1));
    let expected = katokit(&["is-kato", "--manifold", "euclidean:3", "--potential", potential, "--expect", "FAIL"]);
    assert_eq!(expected.status.code(), Some(0));
}

#[test]
fn manifest_errors_carry_line_and_column() {
    let dir = scratch_dir("bad");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "manifold = \"circle\"\n\n[[check]]\nkind = \"kernel-check\"\ntimez = [0.1]\n").unwrap();
    let out = katokit(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("column 1"), "{err}");
}

#[test]
fn unknown_manifolds_are_invalid_manifests() {
    let out = katokit(&["kernel-check", "--manifold", "klein-bottle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_manifest_passes() {
    let dir = scratch_dir("empty");
    let path = dir.join("empty.toml");
    std::fs::write(&path, "manifold = \"sphere2\"\n").unwrap();
    let out = katokit(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn failing_check_does_not_stop_the_run() {
    let dir = scratch_dir("mixed");
    let path = dir.join("mixed.toml");
    let out_path = dir.join("report.json");
    std::fs::write(
        &path,
        "manifold = \"euclidean:3\"\n[[check]]\nkind = \"is-kato\"\npotential = \"radialpower:beta=2:center=0,0,0\"\n[[check]]\nkind = \"kernel-check\"\n",
    )
    .unwrap();
    let out = katokit(&["run", path.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["checks"][0]["verdict"], "FAIL");
    assert_eq!(report["checks"][1]["verdict"], "PASS");
    assert_eq!(report["counts"]["FAIL"], 1);
}

#[test]
fn plots_and_paths_are_written() {
    let dir = scratch_dir("plots");
    let out = katokit(&[
        "feynman-kac",
        "--manifold",
        "circle",
        "--potential",
        "cos",
        "-p",
        "paths=500",
        "-p",
        "step=0.01",
        "--dump-paths",
        dir.join("paths").to_str().unwrap(),
        "--plots",
        dir.join("plots").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let paths = std::fs::read_to_string(dir.join("paths").join("01-feynman-kac-paths.csv")).unwrap();
    assert!(paths.starts_with("path,t,x0,x1"));

    let out = katokit(&["is-kato", "--potential", "const:1", "--plots", dir.join("plots").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let curve = std::fs::read_to_string(dir.join("plots").join("01-is-kato-kato-curve.csv")).unwrap();
    assert!(curve.starts_with("t,N(t)"));
}

#[test]
fn batteries_are_listed_and_valid() {
    let out = katokit(&["list-batteries"]);
    assert_eq!(out.status.code(), Some(0));
    let listing = String::from_utf8_lossy(&out.stdout);
    for b in cli::BATTERIES {
        assert!(listing.contains(b.name));
        cli::battery(b.name).unwrap().validate().unwrap();
    }
    let printed = katokit(&["battery", "semigroup", "--print"]);
    let m = ExperimentManifest::parse(&String::from_utf8_lossy(&printed.stdout)).unwrap();
    assert_eq!(m.checks.len(), cli::battery("semigroup").unwrap().checks.len());
}

#[test]
fn simulate_prints_an_ensemble_summary() {
    let out = katokit(&["simulate", "--manifold", "sphere2", "--t", "0.5", "--step", "0.01", "--paths", "50", "--record", "0.25,0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let s: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["paths"], 50);
    assert_eq!(s["record_times"].as_array().unwrap().len(), 2);
}

#[test]
fn tolerance_scale_is_recorded() {
    let out = katokit(&["riesz-thorin", "--manifold", "circle", "--potential", "const:1", "--tolerance-scale", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["tolerance_scale"], 2.0);
    assert_eq!(report["checks"][0]["tolerance"], 2e-10);
}

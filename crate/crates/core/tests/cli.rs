use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phaselab::ensembles::{Ensemble, NoiseModel};
use phaselab::erm::SolverConfig;
use phaselab::harness::{load_results, ExperimentConfig, SignalSpec, SolverChoice};
use phaselab::sets::ConstraintSet;

fn phaselab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaselab"))
        .args(args)
        .env_remove("PHASELAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        set: ConstraintSet::sparse(16, 2).unwrap(),
        ensemble: Ensemble::gaussian(16).unwrap(),
        noise: NoiseModel::gaussian(1.0).unwrap(),
        x0_spec: SignalSpec::RandomSparse { d: 2, r0: 1.0 },
        n_grid: vec![100, 200, 400],
        sigma_grid: vec![0.2],
        trials_per_cell: 2,
        solver: SolverChoice::Oracle { config: SolverConfig::default() },
        master_seed: 5,
    }
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("run");
    let o = phaselab(&["simulate", &config, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("slope of log product error vs log N"));

    let table = load_results(out.join("results.csv")).unwrap();
    assert_eq!(table.rows.len(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let csv = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let o = phaselab(&["simulate", &config, "--out", out.to_str().unwrap(), "--threads", threads, "--seed", "11"]);
        assert!(o.status.success());
        fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(csv("1"), csv("3"));
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"set": {"kind": "sparse_cap", "n": 8, "d": 2}}"#).unwrap();
    let o = phaselab(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ensemble"));
}

#[test]
fn missing_config_is_an_io_failure() {
    let o = phaselab(&["simulate", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn width_reports_both_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("width.json");
    let o = phaselab(&["width", "--set", "sparse:1:1", "--r", "1", "--draws", "10000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    let mc = v["monte_carlo"]["value"].as_f64().unwrap();
    let se = v["monte_carlo"]["std_error"].as_f64().unwrap();
    assert!((mc - (2.0 / std::f64::consts::PI).sqrt()).abs() < 4.0 * se);
    assert_eq!(v["closed_form"].as_f64(), Some(1.0));
}

#[test]
fn fixed_point_matches_the_noise_free_branch() {
    let o = phaselab(&["fixed-point", "--set", "l1:20:1", "--functional", "rN", "--level", "1", "--N", "1000"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("rN* = 0"), "{}", stdout(&o));
}

#[test]
fn packing_counts_points() {
    let o = phaselab(&["packing", "--set", "l2:2:1", "--radius", "1", "--separation", "0.5", "--center", "0,0"]);
    assert!(o.status.success());
    let count: usize = stdout(&o).trim().trim_start_matches("packing count: ").parse().unwrap();
    assert!(count >= 4, "{count}");
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    assert_eq!(phaselab(&["width", "--set", "cube:3", "--r", "1"]).status.code(), Some(2));
    assert_eq!(phaselab(&["width", "--set", "l1:4:1", "--r", "-1"]).status.code(), Some(2));
    assert_eq!(phaselab(&["check", "nonsense"]).status.code(), Some(2));
    assert_eq!(
        phaselab(&["fixed-point", "--set", "l1:4:1", "--functional", "xN", "--level", "1", "--N", "10"]).status.code(),
        Some(2)
    );
    assert_eq!(phaselab(&["width", "--set", "l1:4:1"]).status.code(), Some(2));
    assert_eq!(phaselab(&["simulate", "x.json", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn check_suite_passes() {
    let o = phaselab(&["check", "rearrangement", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS"));
}

//! Subcommand behaviour and exit statuses.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use tabfuzz::cli::{run_with, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("tabfuzz").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fixture(name: &str) -> String {
    common::fixtures().join(name).display().to_string()
}

/// A config in `dir` pointing at the mini-insurance fixture.
fn write_config(dir: &Path, skip: &str) -> String {
    let lines = [
        ("spec", fixture("mini_insurance.fan")),
        ("data", fixture("mini_insurance.csv")),
        ("out", dir.join("run").display().to_string()),
        ("seed", "4".into()),
        ("task_column", "charges".into()),
        ("task_kind", "regression".into()),
        ("forest_trees", "20".into()),
    ];
    let text: String =
        lines.iter().filter(|(k, _)| *k != skip).map(|(k, v)| format!("{k} = {v}\n")).collect();
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn synth_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let (code, out, err) =
        run(&["synth", "--config", &config, "--set", "rounds=1", "--set", "good_samples=60", "--set", "max_iterations=30"]);
    assert_eq!(code, EXIT_OK, "{err}");
    for name in ["synthetic.csv", "report.txt", "run_log.csv"] {
        assert!(dir.path().join("run").join(name).is_file(), "{name} missing");
    }
    assert!(out.contains("synthetic rows"), "{out}");
    assert!(fs::read_to_string(dir.path().join("run/report.txt")).unwrap().contains("RESEMBLANCE"));
}

#[test]
fn synth_config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "data");
    let (code, _, err) = run(&["synth", "--config", &config]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("`data`"), "{err}");

    let config = write_config(dir.path(), "");
    let (code, _, err) = run(&["synth", "--config", &config, "--set", "colour=blue"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("colour"), "{err}");

    let (code, _, _) = run(&["synth", "--config", &dir.path().join("absent.conf").display().to_string()]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = run(&["synth"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
}

fn report_value(report: &str, key: &str) -> String {
    report.lines().find_map(|l| l.trim().strip_prefix(key)).unwrap_or_else(|| panic!("{key} not in\n{report}")).trim().to_string()
}

#[test]
fn evaluate_identity_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let data = fixture("mini_insurance.csv");
    let (code, out, err) = run(&["evaluate", "--original", &data, "--synthetic", &data, "--config", &config]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(report_value(&out, "aggregate:"), "0.000000");
    assert_eq!(report_value(&out, "exact duplicates of original rows:"), "600");
    let csv = fs::read_to_string(dir.path().join("run/report.csv")).unwrap();
    let score = |model: &str, task: &str| {
        csv.lines().find(|l| l.starts_with(&format!("utility,{model},{task},"))).unwrap().rsplit(',').next().unwrap().to_string()
    };
    for model in ["decision_tree", "random_forest"] {
        assert_eq!(score(model, "Original"), score(model, "Train Generated - Test Original"));
    }
}

#[test]
fn evaluate_disjoint_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let data = fixture("mini_insurance.csv");
    let original = fs::read_to_string(&data).unwrap();
    let known: std::collections::HashSet<&str> = original.lines().collect();
    let (code, fuzzed, _) = run(&["fuzz", "--spec", &fixture("mini_insurance.fan"), "--count", "80", "--seed", "3"]);
    assert_eq!(code, EXIT_OK);
    let disjoint: String = fuzzed.lines().filter(|l| !known.contains(l) || l.starts_with("age")).map(|l| format!("{l}\n")).collect();
    assert!(disjoint.lines().count() > 50);
    let syn = dir.path().join("disjoint.csv");
    fs::write(&syn, disjoint).unwrap();
    let syn = syn.display().to_string();
    let (code, out, err) = run(&["evaluate", "--original", &data, "--synthetic", &syn, "--config", &config]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(report_value(&out, "exact duplicates of original rows:"), "0");

    let narrow: String = original.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    let bad = dir.path().join("narrow.csv");
    fs::write(&bad, narrow).unwrap();
    let (code, _, err) = run(&["evaluate", "--original", &data, "--synthetic", &bad.display().to_string(), "--config", &config]);
    assert_eq!(code, EXIT_USAGE, "{err}");
}

#[test]
fn fuzz_examples() {
    let spec = common::repo_root().join("specs/example.fan").display().to_string();
    let (code, out, _) = run(&["fuzz", "--spec", &spec, "--count", "5", "--seed", "11"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 6, "{out}");
    for l in &lines[1..] {
        let age: i64 = l.split(',').next().unwrap().trim().parse().unwrap();
        assert!(age > 18 && age < 70, "{l}");
    }
    let (code, again, _) = run(&["fuzz", "--spec", &spec, "--count", "5", "--seed", "11"]);
    assert_eq!((code, &again), (EXIT_OK, &out));

    let (code, out, _) = run(&["fuzz", "--spec", &spec, "--count", "0", "--seed", "11"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(&spec).unwrap().replace("int(<age>) < 70", "int(<age>) < 10");
    let bad = dir.path().join("impossible.fan");
    fs::write(&bad, text).unwrap();
    let (code, _, err) = run(&["fuzz", "--spec", &bad.display().to_string(), "--count", "3", "--seed", "1"]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("int(<age>) < 10"), "{err}");
}

fn write_log(dir: &Path, rows: &[(usize, usize, usize, usize)]) {
    let mut s = String::from("round,iteration,new_good,cumulative_good,fool_rate\n");
    for (r, i, n, c) in rows {
        s.push_str(&format!("{r},{i},{n},{c},0.5\n"));
    }
    fs::write(dir.join("run_log.csv"), s).unwrap();
}

fn boundaries(dir: &Path) -> usize {
    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    curve.lines().skip(1).filter(|l| l.ends_with(",1")).count()
}

#[test]
fn report_marks_round_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().display().to_string();
    write_log(dir.path(), &[(1, 1, 5, 5), (1, 2, 3, 8), (1, 3, 0, 8)]);
    assert_eq!(run(&["report", "--run", &run_dir]).0, EXIT_OK);
    assert_eq!(boundaries(dir.path()), 0);

    write_log(dir.path(), &[(1, 1, 5, 5), (1, 2, 3, 8), (2, 3, 4, 12), (2, 4, 1, 13), (3, 5, 2, 15)]);
    let (code, out, _) = run(&["report", "--run", &run_dir]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(boundaries(dir.path()), 2);
    assert!(out.contains("round boundaries: 2"), "{out}");

    write_log(dir.path(), &[(1, 1, 5, 5), (1, 2, 0, 4)]);
    assert_eq!(run(&["report", "--run", &run_dir]).0, EXIT_RUNTIME);

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", "--run", &empty.path().display().to_string()]).0, EXIT_RUNTIME);
}

#[test]
fn binary_exit_statuses() {
    let bin = env!("CARGO_BIN_EXE_tabfuzz");
    let spec = common::repo_root().join("specs/example.fan");
    let ok = Command::new(bin).args(["fuzz", "--spec"]).arg(&spec).args(["--count", "2", "--seed", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).lines().count(), 3);
    let usage = Command::new(bin).args(["fuzz", "--count", "2"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(EXIT_USAGE));
    let missing = Command::new(bin).args(["report", "--run", "/nonexistent/run"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_RUNTIME));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
}

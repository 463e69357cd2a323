//! The command line driven in-process.

use harmonic::cli::run_with;
use harmonic::io::{read_manifest, Table};
use std::path::Path;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("harmonic").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

const RESONANT: &str = r#"{"name": "resonant", "T": "2pi", "k": 1, "s": 1,
  "A": [["0"]], "c": ["cos(t)"], "f1": ["0"], "f2": ["-y1"]}"#;

#[test]
fn scenario_list_names_builtins() {
    let (code, out, _) = run(&["scenario", "list"]);
    assert_eq!(code, 0);
    for name in ["nicexa", "circle", "delay", "springs", "dae-pendulum"] {
        assert!(out.contains(name), "{out}");
    }
}

#[test]
fn linear_writes_xhat_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x.csv");
    let (code, _, err) = run(&["linear", "--scenario", "nicexa", "--out", &out]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1"));
    assert_eq!(lines.next(), Some("0,0.95"));
    assert!(!text.contains('\r'));
    let manifest = read_manifest(Path::new(&out)).unwrap().unwrap();
    assert_eq!(manifest["command"], "linear");
    assert!(manifest["output"]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn degree_on_circle_chart() {
    let (code, out, _) = run(&["degree", "--scenario", "circle", "--region", "chart:theta:0:3.1"]);
    assert_eq!(code, 0);
    assert!(out.contains("degree = 1"), "{out}");
    // the whole circle has degree zero: a hypothesis failure
    let (code, _, err) = run(&["degree", "--scenario", "circle", "--region", "chart:theta:0:6.2831853"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn resonant_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "resonant.json");
    std::fs::write(&file, RESONANT).unwrap();
    let (code, _, err) = run(&["linear", "--scenario", &file]);
    assert_eq!(code, 2, "{err}");
    assert!(!err.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["linear", "--scenario", "nicexa", "--bogus"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["linear", "--scenario", "no-such-scenario"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn branch_is_deterministic_and_leaves_no_temp_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.csv");
    let b = path(dir.path(), "b.csv");
    for out in [&a, &b] {
        let (code, _, err) = run(&["branch", "--scenario", "nicexa", "--lambda-max", "0.2", "--out", out]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["a.csv", "a.csv.manifest.json", "b.csv", "b.csv.manifest.json"]);
    let table = Table::read(Path::new(&a)).unwrap();
    for col in ["seed_id", "point_index", "lambda", "p1", "q1", "residual", "index"] {
        assert!(table.column_index(col).is_some(), "missing {col}");
    }
    let lambda = table.column("lambda").unwrap();
    assert_eq!(lambda[0], 0.0);
    assert!((lambda.last().unwrap() - 0.2).abs() < 1e-12);
}

#[test]
fn triples_and_plot_from_branch() {
    let dir = tempfile::tempdir().unwrap();
    let branch = path(dir.path(), "branch.csv");
    let triples = path(dir.path(), "triples.csv");
    let svg = path(dir.path(), "branch.svg");
    assert_eq!(run(&["branch", "--scenario", "nicexa", "--lambda-max", "0.1", "--out", &branch]).0, 0);
    let (code, _, err) = run(&["triples", "--in", &branch, "--stride", "3", "--grid", "16", "--out", &triples]);
    assert_eq!(code, 0, "{err}");
    let t = Table::read(Path::new(&triples)).unwrap();
    assert!(!t.is_empty());
    let (code, _, err) = run(&["plot", "--in", &branch, "--x", "lambda", "--y", "q1", "--out", &svg]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.contains("polyline"));
    assert!(Path::new(&format!("{svg}.manifest.json")).exists());
}

#[test]
fn plot_single_point_and_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let one = path(dir.path(), "one.csv");
    let empty = path(dir.path(), "empty.csv");
    std::fs::write(&one, "a,b\n1,2\n").unwrap();
    std::fs::write(&empty, "a,b\n").unwrap();
    let svg = path(dir.path(), "one.svg");
    let (code, _, err) = run(&["plot", "--in", &one, "--x", "a", "--y", "b", "--out", &svg]);
    assert_eq!(code, 0, "{err}");
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<circle"));
    let (code, _, err) = run(&["plot", "--in", &empty, "--x", "a", "--y", "b", "--out", &path(dir.path(), "e.svg")]);
    assert_eq!(code, 1);
    assert!(err.contains("no rows"), "{err}");
    assert!(!dir.path().join("e.svg").exists());
}

#[test]
fn verify_passes_on_builtins() {
    for name in ["nicexa", "circle", "delay", "springs", "dae-pendulum"] {
        let (code, out, err) = run(&["verify", "--scenario", name]);
        assert_eq!(code, 0, "{name}: {out}{err}");
    }
}

#[test]
fn json_summary_parses() {
    let (code, out, _) = run(&["degree", "--scenario", "nicexa", "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["degree"], -1);
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dccc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dccc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dccc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, seed: &str) -> (String, String) {
    let model = dir.join("model.json").display().to_string();
    let evidence = dir.join("evidence.json").display().to_string();
    ok(&["generate", "--seed", seed, "--model-out", &model, "--evidence-out", &evidence]);
    (model, evidence)
}

#[test]
fn solve_writes_vertices_per_exogenous_variable() {
    let dir = tempfile::tempdir().unwrap();
    let (model, evidence) = generate(dir.path(), "3");
    let out = dir.path().join("solve.json");
    ok(&[
        "solve", "--model", &model, "--evidence", &evidence, "--regime", "s-oe", "--out",
        out.to_str().unwrap(),
    ]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["regime"], "s-oe");
    assert_eq!(doc["exogenous"]["U0"]["vertices"].as_array().unwrap().len(), 1);
    let u = &doc["exogenous"]["U"];
    assert_eq!(u["complete"], true);
    assert_eq!(u["supports_total"], 11440);
    for v in u["vertices"].as_array().unwrap() {
        let sum: f64 = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-7);
    }
}

#[test]
fn heuristic_flags_are_accepted_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (model, evidence) = generate(dir.path(), "4");
    let text = ok(&[
        "solve", "--model", &model, "--evidence", &evidence, "--regime", "s-o", "--mode", "heuristic",
        "--coverage", "--lowprob", "2,1",
    ]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["exogenous"]["U"]["complete"], false);
    let bad = dccc(&[
        "solve", "--model", &model, "--evidence", &evidence, "--regime", "s-o", "--coverage",
    ]);
    assert!(!bad.status.success());
}

#[test]
fn bound_and_oracle_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (model, evidence) = generate(dir.path(), "5");
    for regime in ["s-o", "s-oe", "s-e"] {
        let b: Value = serde_json::from_str(&ok(&[
            "bound", "--model", &model, "--evidence", &evidence, "--regime", regime, "--query", "pns:X:Y2",
        ]))
        .unwrap();
        let o: Value = serde_json::from_str(&ok(&[
            "oracle-check", "--model", &model, "--evidence", &evidence, "--regime", regime, "--query", "pns:X:Y2",
        ]))
        .unwrap();
        assert_eq!(o["pass"], true);
        assert_eq!(b["lower"], o["dccc"][0]);
        assert_eq!(b["upper"], o["dccc"][1]);
        assert_eq!(b["complete"], true);
    }
}

#[test]
fn merged_regime_reports_not_computable_query() {
    let dir = tempfile::tempdir().unwrap();
    let (model, evidence) = generate(dir.path(), "6");
    let b: Value = serde_json::from_str(&ok(&[
        "bound", "--model", &model, "--evidence", &evidence, "--regime", "mm-o", "--query", "pns:X:Y1",
    ]))
    .unwrap();
    assert!(b["vertex_counts"]["U*"].as_u64().unwrap() >= 1);
    let out = dccc(&[
        "bound", "--model", &model, "--evidence", &evidence, "--regime", "mm-o", "--query", "pns:Y1:Y2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not computable"));
}

#[test]
fn system_and_mapping_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let (model, evidence) = generate(dir.path(), "7");
    let csv = ok(&[
        "system", "--model", &model, "--evidence", &evidence, "--regime", "s-oe", "--exogenous", "U",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[0].starts_with("constraint,U_0,"));
    assert!(lines[0].ends_with(",rhs"));
    let mapping = ok(&["mapping", "--model", &model]);
    let rows: Vec<&str> = mapping.lines().collect();
    assert_eq!(rows[0], "U*,U");
    for forbidden in ["1,", "4,", "11,", "14,"] {
        assert!(rows.contains(&forbidden));
    }
}

#[test]
fn experiment_is_byte_stable_without_wallclock() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, extra) in [(&a, None), (&b, Some("--serial"))] {
        let mut args = vec![
            "experiment", "--n", "3", "--seed", "11", "--no-wallclock", "--out", out.to_str().unwrap(),
        ];
        args.extend(extra);
        ok(&args);
    }
    for f in ["rows.csv", "summary_lengths.csv", "summary_containment.csv", "summary_rmse.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert!(!x.is_empty());
    }
    let rows = std::fs::read_to_string(a.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 5 * 3);
    assert!(rows.contains("not_computable"));
}

#[test]
fn unknown_regime_is_an_error() {
    let out = dccc(&["experiment", "--n", "1", "--regimes", "s-x", "--out", "/nonexistent"]);
    assert!(!out.status.success());
}

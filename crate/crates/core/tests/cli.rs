use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn qpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpf")).args(args).output().expect("spawn qpf")
}

fn case(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_classical_case3() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpf(&["run", &case("case3.json"), "--solver", "classical", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("    5   1.01200181     2.10872362   0.98496362    -4.99629051"), "{text}");
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("iter,V2,theta2_deg,V3,theta3_deg,dP_norm,dQ_norm\n"));
    let sol: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["iterations"], 5);
    assert_eq!(sol["converged"], true);
    assert!((sol["theta_deg"][2].as_f64().unwrap() + 4.99629051).abs() < 1e-7);
}

#[test]
fn run_hhl_ideal_matches_classical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = qpf(&["run", &case("case3.json"), "--out", a.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = qpf(&[
        "run",
        &case("case3.json"),
        "--solver",
        "hhl-ideal",
        "--readout",
        "exact",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let read = |d: &tempfile::TempDir| -> Value {
        serde_json::from_str(&fs::read_to_string(d.path().join("solution.json")).unwrap()).unwrap()
    };
    let (ca, hb) = (read(&a), read(&b));
    assert!(hb["final_dp_norm"].as_f64().unwrap() < 1e-5 && hb["final_dq_norm"].as_f64().unwrap() < 1e-5);
    for key in ["vm", "theta_deg"] {
        for (x, y) in ca[key].as_array().unwrap().iter().zip(hb[key].as_array().unwrap()) {
            assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-8);
        }
    }
    assert_eq!(hb["last_solve"]["width"], 5);
    assert_eq!(hb["last_solve"]["readout"], "exact");
}

#[test]
fn missing_case_is_input_error() {
    let out = qpf(&["run", "definitely-missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qpf(&["run", &case("case3.json"), "--solver", "newton"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn iteration_limit_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpf(&["run", &case("case3.json"), "--max-iter", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn noisy_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = qpf(&[
            "run",
            &case("case3.json"),
            "--solver",
            "hhl-noisy",
            "--p-cnot",
            "0.01",
            "--seed",
            "4",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["trace.csv", "solution.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn analyze_condition() {
    let out = qpf(&["analyze", "condition", &case("case3.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v[0]["kappa"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn analyze_circuit_widths() {
    let out = qpf(&["analyze", "circuit", &case("case3.json"), &case("case5.json")]);
    assert_eq!(out.status.code(), Some(0));
    let widths: Vec<String> = stdout(&out).lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect();
    assert_eq!(widths, ["5", "7"]);
    assert!(stdout(&out).contains(",2x2,"));
}

#[test]
fn analyze_compare_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cmp.csv");
    let out = qpf(&[
        "analyze",
        "compare",
        &case("case3.json"),
        "--solvers",
        "classical,hhl-ideal",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iter,classical,hhl-ideal");
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 3));
}

#[test]
fn analyze_rejects_bad_input() {
    assert_eq!(qpf(&["analyze", "condition", "nope.json"]).status.code(), Some(1));
    assert_eq!(qpf(&["analyze", "compare", &case("case3.json"), "--solvers", "magic"]).status.code(), Some(1));
}

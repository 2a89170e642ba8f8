use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_debranges"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(o)).unwrap()
}

fn example1(l: &str) -> String {
    stdout(&run(&["example1", "--L", l], ""))
}

#[test]
fn ktilde_of_example1() {
    let v = json(&run(&["ktilde"], &example1("5")));
    assert_eq!(v, serde_json::json!({ "ktilde": 10.0 }));
}

#[test]
fn closed_entropy_of_example1() {
    let o = run(&["entropy", "--method", "closed"], &example1("1"));
    assert_eq!(stdout(&o).trim(), r#"{"K":0.6931471805599453}"#);
    let q = json(&run(&["entropy", "--method", "quad"], &example1("1")));
    assert!((q["K"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-5);
    assert_eq!(q["method"], "quadrature");
}

#[test]
fn exit_codes() {
    let bad = r#"{"cells":[{"len":1,"h":[[-1,0],[0,1]]}],"tail":{"h":[[1,0],[0,1]]}}"#;
    let o = run(&["validate"], bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cell 0 not PSD"));
    assert_eq!(run(&["ktilde"], bad).status.code(), Some(2));
    assert_eq!(run(&["ktilde"], "{not json").status.code(), Some(1));
    assert_eq!(run(&["weyl", "--z", "1+"], &example1("2")).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], "").status.code(), Some(1));
    assert_eq!(run(&["example2", "--eps", "0.9", "--T", "3"], "").status.code(), Some(2));
    // Oscillation factorization needs det H = 1.
    assert_eq!(run(&["factorize"], &example1("2")).status.code(), Some(2));
    let ok = json(&run(&["validate"], &example1("2")));
    assert_eq!(ok["status"], "valid-nontrivial-singular");
}

#[test]
fn hamiltonian_round_trip_is_bit_exact() {
    let h = stdout(&run(&["example3", "--pieces", "0.3:0.7,1.1:-0.45"], ""));
    let again = stdout(&run(
        &["dirac"],
        r#"{"cells":[{"len":0.3,"v":[[0.7,0.0],[0.0,-0.7]]},{"len":1.1,"v":[[-0.45,0.0],[0.0,0.45]]}]}"#,
    ));
    assert_eq!(h, again);
    let parsed: debranges::hamiltonian::PiecewiseHamiltonian = serde_json::from_str(&h).unwrap();
    assert_eq!(serde_json::to_string(&parsed).unwrap() + "\n", h);
    // Deterministic output.
    let a = stdout(&run(&["factorize", "--method", "oscillation"], &h));
    let b = stdout(&run(&["factorize", "--method", "oscillation"], &h));
    assert_eq!(a, b);
    let f: Value = serde_json::from_str(&a).unwrap();
    for key in ["grid", "G", "Q", "V1", "V2", "norms"] {
        assert!(f.get(key).is_some(), "{key}");
    }
}

#[test]
fn factorize_then_verify() {
    let h = stdout(&run(&["example3", "--pieces", "0.5:0.6,0.8:-0.3"], ""));
    let dir = std::env::temp_dir().join(format!("debranges-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let hp = dir.join("h.json");
    let fp = dir.join("f.json");
    std::fs::write(&hp, &h).unwrap();
    let f = run(&["factorize", "--method", "spectral", hp.to_str().unwrap()], "");
    std::fs::write(&fp, f.stdout).unwrap();
    let v = json(&run(&["verify-fact", hp.to_str().unwrap(), "--fact", fp.to_str().unwrap(), "--tol", "1e-6"], ""));
    assert_eq!(v["pass"], true);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn grids_are_csv() {
    let h = example1("2");
    let d = stdout(&run(&["density", "--x-min", "-1", "--x-max", "1", "--n", "3"], &h));
    let lines: Vec<&str> = d.lines().collect();
    assert_eq!(lines[0], "x,w");
    assert_eq!(lines.len(), 4);
    let w: f64 = lines[3].split(',').nth(1).unwrap().parse().unwrap();
    assert!((w - 1.0 / 5.0).abs() < 1e-12);

    let k = stdout(&run(&["krein-density", "--n", "5", "--x-min", "-2", "--x-max", "2"], &h));
    for line in k.lines().skip(1) {
        let c: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((c[1] * c[2] - 1.0).abs() < 1e-10, "{line}");
    }
    assert!(k.starts_with("x,w,pstar_sq\n"));
    let p = stdout(&run(&["profile", "--n", "5"], &h));
    assert!(p.starts_with("r,K\n"));
    assert!(p.trim_end().ends_with(",0.0"));
    let t = stdout(&run(&["ktilde", "--terms"], &h));
    assert!(t.starts_with("n,term\n"));
    let e = stdout(&run(&["entropy", "--diagnostics", "8"], &h));
    assert_eq!(e.lines().count(), 9);
}

#[test]
fn weyl_and_transfer() {
    let h = example1("5");
    let v = json(&run(&["weyl", "--z", "i"], &h));
    assert!((v["m"]["im"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-12);
    assert!(v["m"]["re"].as_f64().unwrap().abs() < 1e-12);
    let t = json(&run(&["transfer", "--t", "5", "--z", "2"], &h));
    // M(5, 2) = ((1, 0), (-10, 1)) on the singular interval.
    assert!((t["m"][1][0]["re"].as_f64().unwrap() + 10.0).abs() < 1e-12);
}

#[test]
fn audit_suite_is_seeded() {
    let a = stdout(&run(&["audit-theorem1", "--random", "6", "--seed", "3"], ""));
    let b = stdout(&run(&["audit-theorem1", "--random", "6", "--seed", "3"], ""));
    assert_eq!(a, b);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["finiteness_mismatches"], 0);
    assert!(v["fitted_c"].as_f64().unwrap() <= 20.0);
}

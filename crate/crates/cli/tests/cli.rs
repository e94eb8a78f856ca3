use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mtw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn bdt_json(pairs: &[(f64, f64)], arcs: &[(usize, usize)]) -> String {
    let branches: Vec<Value> = pairs
        .iter()
        .enumerate()
        .map(|(id, (b, d))| serde_json::json!({"id": id, "birth": b, "death": d}))
        .collect();
    serde_json::json!({"kind": "join", "branches": branches, "arcs": arcs}).to_string()
}

fn ensemble(dir: &Path) {
    let members = [
        bdt_json(&[(0.0, 10.0), (2.0, 5.0)], &[(0, 1)]),
        bdt_json(&[(0.0, 9.0), (1.0, 6.0), (6.5, 7.0)], &[(0, 1), (0, 2)]),
        bdt_json(&[(0.0, 11.0), (3.0, 5.0)], &[(0, 1)]),
        bdt_json(&[(0.0, 10.0), (2.0, 8.0), (3.0, 4.0)], &[(0, 1), (1, 2)]),
    ];
    for (i, m) in members.iter().enumerate() {
        write(&dir.join(format!("m{i}.json")), m);
    }
}

#[test]
fn identical_distance_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.bdt.json");
    write(&a, &bdt_json(&[(0.0, 10.0), (2.0, 5.0)], &[(0, 1)]));
    let out = mtw(&["distance", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.0");
}

#[test]
fn geodesic_starts_at_first_input() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    let a_text = bdt_json(&[(0.0, 10.0), (2.0, 5.0)], &[(0, 1)]);
    write(&a, &a_text);
    write(&b, &bdt_json(&[(0.0, 8.0)], &[]));
    let out = mtw(&["geodesic", a.to_str().unwrap(), b.to_str().unwrap(), "--alpha", "0,0.5,1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 3);
    let first: Value = serde_json::from_str(&a_text).unwrap();
    assert_eq!(samples[0]["bdt"], first);
}

#[test]
fn barycenter_trace_follows_stop_rule() {
    let tmp = tempfile::tempdir().unwrap();
    ensemble(tmp.path());
    let out = mtw(&["barycenter", tmp.path().to_str().unwrap(), "--weights", "uniform"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let trace: Vec<f64> = v["energy_trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(!trace.is_empty());
    for (k, w) in trace.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-12);
        let small = w[0] - w[1] < 0.01 * w[0];
        assert_eq!(small, k + 2 == trace.len(), "trace {trace:?}");
    }
}

#[test]
fn outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ens");
    std::fs::create_dir(&dir).unwrap();
    ensemble(&dir);
    let run = |name: &str| {
        let path = tmp.path().join(name);
        let out = mtw(&["cluster", dir.to_str().unwrap(), "-k", "2", "--seed", "5", "-o", path.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("one.json"), run("two.json"));
}

#[test]
fn field_inputs_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("f.json");
    write(&f, r#"{"dims": [5], "values": [0, 3, 1, 4, 0]}"#);
    let out = mtw(&["tree", f.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["diagram"].as_array().unwrap().len(), 2);

    let dir = tmp.path().join("ens");
    std::fs::create_dir(&dir).unwrap();
    ensemble(&dir);
    let out = mtw(&["distance", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.trim().lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0.0,"));
}

#[test]
fn exit_codes() {
    assert_eq!(mtw(&["nonsense"]).status.code(), Some(2));
    assert_eq!(mtw(&["distance", "a", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(mtw(&["distance", "/no/such/a.json", "/no/such/b.json"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    write(&a, &bdt_json(&[(0.0, 1.0)], &[]));
    let p = a.to_str().unwrap();
    assert_eq!(mtw(&["distance", p, p, "--eps1", "3"]).status.code(), Some(1));
    write(&a, r#"{"dims": [3], "values": [0, 1]}"#);
    assert_eq!(mtw(&["tree", p]).status.code(), Some(1));
}

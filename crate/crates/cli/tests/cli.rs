use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hypwin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypwin")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

const DOUBLING: &str = r#"{"map":{"kind":"times","m":2},"target":{"kind":"identity"},"gamma":"0.25",
  "bob":{"kind":"random","lambda":"0.25","seed":1},"max_rounds":1200,"strategy":{"kind":"b","stages":2}}"#;

#[test]
fn invalid_gamma_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"map":{"kind":"times","m":2},"target":{"kind":"identity"},"gamma":"0.4",
      "bob":{"kind":"random","lambda":"0.25"}}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    let out = hypwin(&["run", "spec.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["message"], "gamma must lie in (0,1/3)");
    assert!(!dir.path().join("trace.json").exists());
}

#[test]
fn malformed_spec_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.json"), r#"{"map":{"kind":"tent"}}"#).unwrap();
    assert_eq!(hypwin(&["run", "spec.json"], dir.path()).status.code(), Some(2));
    assert_eq!(hypwin(&["run", "missing.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn exhausted_precision_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"map":{"kind":"beta","beta":"1.6180339887498948482"},"target":{"kind":"constant","point":["0"]},
      "gamma":"0.25","mode":"bigfloat:32","bob":{"kind":"random","lambda":"0.25","seed":1},"max_rounds":300,
      "strategy":{"kind":"a","constants":{"n":40,"s1":8,"s2":3,"delta":"0.000001"}}}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    let out = hypwin(&["run", "spec.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "precision");
}

#[test]
fn certified_run_verifies_replays_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("spec.json"), DOUBLING).unwrap();
    let out = hypwin(&["run", "spec.json"], p);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let v: Value = serde_json::from_str(&fs::read_to_string(p.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["stages_completed"], 2);
    let delta: hypwin::Scalar = serde_json::from_value(v["delta"].clone()).unwrap();
    let min: hypwin::Scalar = serde_json::from_value(v["min_covered"].clone()).unwrap();
    assert!(min.ge(&delta).unwrap());

    let again = hypwin(&["replay", "trace.json", "--out", "replayed.json"], p);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read(p.join("trace.json")).unwrap(), fs::read(p.join("replayed.json")).unwrap());

    let checked = hypwin(&["verify", "spec.json", "trace.json", "--out", "verify2.json"], p);
    assert_eq!(checked.status.code(), Some(0));
    assert_eq!(fs::read(p.join("verify.json")).unwrap(), fs::read(p.join("verify2.json")).unwrap());

    let second = hypwin(&["run", "spec.json", "--out-dir", "second"], p);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(fs::read(p.join("trace.json")).unwrap(), fs::read(p.join("second/trace.json")).unwrap());
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let spec = r#"{"map":{"kind":"times","m":2},"target":{"kind":"identity"},"gamma":"0.25",
      "bob":{"kind":"random","lambda":"0.25","seed":2},"max_rounds":20,"strategy":{"kind":"pass"}}"#;
    fs::write(p.join("spec.json"), spec).unwrap();
    assert_eq!(hypwin(&["run", "spec.json"], p).status.code(), Some(0));
    let mut trace: Value = serde_json::from_str(&fs::read_to_string(p.join("trace.json")).unwrap()).unwrap();
    trace["rounds"][3]["bob"]["radius"] = Value::from("0.5");
    fs::write(p.join("bad.json"), trace.to_string()).unwrap();
    let out = hypwin(&["replay", "bad.json"], p);
    assert_ne!(out.status.code(), Some(0));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("round 4") || err["error"]["kind"] == "replay");
}

#[test]
fn doubling_cylinders_at_depth_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypwin(&["analyze", "cylinders", "--map", r#"{"kind":"times","m":2}"#, "--depth", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[3], "0.125");
        assert_eq!(row[1].parse::<f64>().unwrap(), i as f64 / 8.0);
    }
    assert_eq!(rows[2][0], "0.1.0");
}

#[test]
fn constants_match_the_library_and_the_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let map = r#"{"kind":"times","m":2}"#;
    let out = hypwin(&["analyze", "constants", "--map", map, "--gamma", "0.2", "--assumption", "b"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let got: Value = serde_json::from_str(&stdout(&out)).unwrap();

    let seq = serde_json::from_str::<hypwin::dynamics::MapSpec>(map).unwrap().build(hypwin::NumericMode::Rational).unwrap();
    let lib = hypwin::strategies::constants_b(&seq, &hypwin::Scalar::one(), &"0.2".parse().unwrap(), 512).unwrap();
    assert_eq!(got, serde_json::to_value(&lib).unwrap());

    // Snapshot of the ledger for the doubling map with an identity target.
    assert_eq!(got["epsilon"], "25/26");
    assert_eq!(got["n"], 400);
    assert_eq!(got["s1"], 171);
    assert_eq!(got["s2"], 1);
    assert_eq!(got["s"], 172);
    assert_eq!(got["c1"], "1");
    assert_eq!(got["c2"], "1");
    assert_eq!(got["certified"], true);
}

#[test]
fn cantor_subsystem_dimension_column() {
    let dir = tempfile::tempdir().unwrap();
    let ifs = r#"{"maps":[{"ratio":"1/3","offset":"0"},{"ratio":"1/3","offset":"2/3"}]}"#;
    fs::write(dir.path().join("cantor.json"), ifs).unwrap();
    let out = hypwin(
        &["analyze", "subsystem", "--ifs", "cantor.json", "--r", "1/729", "--r", "1/27", "--samples", "500"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 2);
    let s = 2f64.ln() / 3f64.ln();
    let dim: f64 = rows[0][4].parse().unwrap();
    assert!((dim - s).abs() < 0.08);
    assert_eq!(rows[0][1], "128");
    assert_eq!(rows[0][2], "128");
    assert_eq!(rows[0][7], "0");
}

#[test]
fn sweep_rows_follow_cell_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"map":{"kind":"times","m":2},"target":{"kind":"identity"},"gamma":"0.25",
      "bob":{"kind":"random","lambda":"0.25"},"max_rounds":6,"strategy":{"kind":"pass"}}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    let out = hypwin(
        &["analyze", "sweep", "spec.json", "--gammas", "0.1,0.3", "--policies", "random,greedy", "--seeds", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        assert_eq!(row[4], "6");
    }
    assert_eq!(rows[0][1], "0.1");
    assert_eq!(rows[2][2], "greedy");
    assert_eq!(rows[7][1], "0.3");
}

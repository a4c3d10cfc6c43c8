use std::path::Path;
use std::process::{Command, Output};

use autoqec_cli::model_file::{model_hash, parse_model, resolve_model, serialize_model};

fn autoqec(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_autoqec"));
    cmd.args(args).env_remove("AUTOQEC_WORKERS");
    if let Some(p) = out {
        cmd.arg("--out").arg(p);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn validate_exit_codes() {
    let ok = autoqec(&["validate", "--model", "toy6", "--order", "1"], None);
    assert_eq!(code(&ok), 0);
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("KL PASS"));
    let bad = autoqec(&["validate", "--model", "toy6", "--order", "2"], None);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("F1"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&autoqec(&["validate", "--model", "toy6", "--nope"], None)), 2);
    assert_eq!(code(&autoqec(&["validate", "--model", "no-such-model"], None)), 2);
    assert_eq!(code(&autoqec(&["frobnicate"], None)), 2);
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"dim\": 2,\n  \"bogus\": 1\n}\n").unwrap();
    let o = autoqec(&["validate", "--model", path.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let original = resolve_model("toy6").unwrap();
    let path = dir.path().join("toy6.json");
    std::fs::write(&path, serialize_model(&original)).unwrap();
    let back = parse_model(&path).unwrap();
    assert_eq!(model_hash(&original), model_hash(&back));
    let from_file = autoqec(&["validate", "--model", path.to_str().unwrap(), "--order", "1"], None);
    let builtin = autoqec(&["validate", "--model", "toy6", "--order", "1"], None);
    assert_eq!(code(&from_file), 0);
    assert_eq!(from_file.stdout, builtin.stdout);
}

#[test]
fn outputs_reference_their_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let args = ["sweep", "--model", "toy6", "--R", "10,20,40", "--g", "0"];
    assert_eq!(code(&autoqec(&args, Some(&csv))), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let first = text.lines().next().unwrap();
    let name = first.strip_prefix("# manifest: ").expect("manifest line");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);

    let again = dir.path().join("again.csv");
    assert_eq!(code(&autoqec(&args, Some(&again))), 0);
    assert_eq!(std::fs::read(&again).unwrap(), text.as_bytes());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);

    let report = dir.path().join("lemma.json");
    let o = autoqec(&["verify-lemma", "--model", "toy6", "--h0", "0.5x"], Some(&report));
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(dir.path().join(v["manifest"].as_str().unwrap()).exists());
}

#[test]
fn refused_fit_exits_one() {
    let o = autoqec(&["sweep", "--model", "lowering3", "--R", "10,20,40", "--g", "0"], None);
    assert_eq!(code(&o), 1);
}

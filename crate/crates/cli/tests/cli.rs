use std::path::{Path, PathBuf};
use std::process::Command;

use tpds::informativity::{self, ExperimentData};
use tpds::sim::random_system;
use tpds::Tensor3;
use tpds_cli::SystemFile;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn tpds(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tpds")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn worked() -> String {
    data_dir().join("worked_example.json").to_str().unwrap().to_owned()
}

#[test]
fn check_stabilization_on_worked_example_is_positive() {
    let (code, out, _) = tpds(&["check", "stabilization", "--data", &worked()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"], true);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 2);
}

#[test]
fn check_sysid_on_zero_data_is_negative() {
    let dir = tempfile::tempdir().unwrap();
    let z = |n, m| Tensor3::zeros(n, m, 3);
    let d = ExperimentData::new(z(1, 4), z(2, 4), z(2, 4), 1).unwrap();
    let path = write(dir.path(), "zero.json", &d);
    assert_eq!(tpds(&["check", "sysid", "--data", &path]).0, 1);
    assert_eq!(tpds(&["check", "sysid", "--data", &path, "--method", "unfolded"]).0, 1);
}

#[test]
fn indefinite_input_weight_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.json", &(&Tensor3::identity(2, 2) * -1.0));
    let (code, _, err) = tpds(&["check", "tqr", "--data", &worked(), "--weights-r", &r]);
    assert_eq!(code, 2);
    assert!(err.contains("weight"), "{err}");
}

#[test]
fn missing_and_malformed_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.json");
    let out = out.to_str().unwrap();
    assert_eq!(tpds(&["synth", "stabilization", "--data", "/nonexistent.json", "--out", out]).0, 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"v\": [1, 2").unwrap();
    let (code, _, err) = tpds(&["check", "sysid", "--data", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("malformed"), "{err}");
}

#[test]
fn positional_arguments_are_rejected() {
    assert_eq!(tpds(&["check", "sysid", "data.json"]).0, 2);
}

#[test]
fn printed_gain_is_accepted_with_the_plus_law_only() {
    let gain = data_dir().join("worked_example_gain.json");
    let gain = gain.to_str().unwrap();
    assert_eq!(tpds(&["verify", "--data", &worked(), "--gain", gain, "--law", "plus"]).0, 0);
    assert_eq!(tpds(&["verify", "--data", &worked(), "--gain", gain, "--law", "minus"]).0, 1);
}

#[test]
fn synthesized_gain_is_written_and_verified() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    let k = k.to_str().unwrap();
    let (code, out, _) = tpds(&["synth", "stabilization", "--data", &worked(), "--out", k]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["max_modulus"].as_f64().unwrap() < 1.0 - 1e-6);
    assert_eq!(tpds(&["verify", "--data", &worked(), "--gain", k]).0, 0);
}

#[test]
fn generate_then_identify_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = random_system(2, 1, 3, 4);
    let sys = write(dir.path(), "sys.json", &SystemFile { a: a.clone(), b: b.clone() });
    let data = dir.path().join("data.json");
    let data = data.to_str().unwrap();
    let (code, _, _) = tpds(&["generate", "--system", &sys, "--l", "4", "--seed", "2", "--out", data]);
    assert_eq!(code, 0);
    let (code, out, _) = tpds(&["identify", "--data", data]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let ai: Tensor3 = serde_json::from_value(v["a"].clone()).unwrap();
    let bi: Tensor3 = serde_json::from_value(v["b"].clone()).unwrap();
    assert!(ai.max_abs_diff(&a) <= 1e-8 && bi.max_abs_diff(&b) <= 1e-8);
}

#[test]
fn identify_rejects_worked_example() {
    assert_eq!(tpds(&["identify", "--data", &worked()]).0, 1);
}

#[test]
fn printed_gain_drives_identified_system_to_rest() {
    let dir = tempfile::tempdir().unwrap();
    let d: ExperimentData = serde_json::from_str(&std::fs::read_to_string(worked()).unwrap()).unwrap();
    let (a, b, _) = informativity::identify_least_squares(&d).unwrap();
    let sys = write(dir.path(), "sys.json", &SystemFile { a, b });
    let printed: Tensor3 =
        serde_json::from_str(&std::fs::read_to_string(data_dir().join("worked_example_gain.json")).unwrap()).unwrap();
    // the printed gain acts as u = K⋆x
    let k = write(dir.path(), "k.json", &-&printed);
    let (code, out, _) = tpds(&["simulate", "--system", &sys, "--gain", &k, "--steps", "60", "--seed", "1"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let norms: Vec<f64> = serde_json::from_value(v["state_norms"].clone()).unwrap();
    assert!(norms.last().unwrap() < &(1e-6 * norms[0]));
}

#[test]
fn simulate_with_mismatched_dims_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = random_system(2, 1, 3, 4);
    let sys = write(dir.path(), "sys.json", &SystemFile { a, b });
    let k = write(dir.path(), "k.json", &Tensor3::zeros(1, 3, 3));
    assert_eq!(tpds(&["simulate", "--system", &sys, "--gain", &k]).0, 2);
}

#[test]
fn synth_tqr_matches_model_based_gain() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = random_system(2, 1, 4, 8);
    let sys = write(dir.path(), "sys.json", &SystemFile { a: a.clone(), b: b.clone() });
    let data = dir.path().join("d.json");
    let data = data.to_str().unwrap();
    assert_eq!(tpds(&["generate", "--system", &sys, "--l", "4", "--seed", "3", "--out", data]).0, 0);
    let k = dir.path().join("k.json");
    let k = k.to_str().unwrap();
    assert_eq!(tpds(&["synth", "tqr", "--data", data, "--out", k]).0, 0);
    let kd: Tensor3 = serde_json::from_str(&std::fs::read_to_string(k).unwrap()).unwrap();
    let (code, out, _) = tpds(&["solve-tqr", "--system", &sys]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let km: Tensor3 = serde_json::from_value(v["k"].clone()).unwrap();
    assert!((&kd - &km).frobenius_norm() <= 1e-4 * km.frobenius_norm());
}

#[test]
fn bench_single_trial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let (code, _, _) = tpds(&[
        "bench", "--task", "stabilization", "--p-min", "1", "--p-max", "1", "--trials", "1", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,task,p,n,m,l,h,trials,mean_seconds,std_seconds,status");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[1..8], &["stabilization", "1", "2", "2", "4", "1", "1"]);
        assert_eq!(f[9], "0.0");
        assert_eq!(f[10], "ok");
    }
}

#[test]
fn failed_bench_rows_carry_no_timing() {
    let (code, out, _) = tpds(&[
        "bench", "--task", "tqr", "--p-min", "1", "--p-max", "2", "--trials", "1", "--memory-budget", "1",
    ]);
    assert_eq!(code, 0);
    for row in out.lines().skip(1) {
        assert!(row.ends_with(",,,failed") || row.ends_with(",ok"), "{row}");
    }
    assert!(out.lines().skip(1).all(|r| r.ends_with(",,,failed")));
}

use std::path::Path;
use std::process::{Command, Output};

fn see(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_see")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"system": "double_integrator", "export_pgm": true}"#);
    let out = tmp.path().join("run");
    let o = see(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("100.00") && table.contains("equilibrium"), "{table}");
    for f in ["summary.json", "config.json", "iter_0/model.json", "iter_1/zone.csv", "iter_1/ud_state.pgm", "baseline/zone.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let o = see(&["verify", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::remove_file(out.join("iter_1/ud_state.pgm")).unwrap();
    let o = see(&["export", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("iter_1/ud_state.pgm").is_file());
}

#[test]
fn tampered_model_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = see(&[
        "run",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "system=double_integrator",
        "--set",
        "max_iterations=2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = out.join("iter_2/model.json");
    let mut model: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let pairs = model["pairs"].as_array_mut().unwrap();
    let victim = pairs.iter_mut().find(|p| p["set"].as_array().unwrap().len() > 1).unwrap();
    let (x, u) = (victim["x"].clone(), victim["u"].clone());
    let truth = serde_json::json!([
        x[0].as_i64().unwrap() + x[1].as_i64().unwrap(),
        x[1].as_i64().unwrap() + u[0].as_i64().unwrap()
    ]);
    victim["set"].as_array_mut().unwrap().retain(|c| *c != truth);
    std::fs::write(&path, serde_json::to_vec(&model).unwrap()).unwrap();
    let o = see(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("calibration"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_run_per_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"system": "double_integrator"}"#);
    let out = tmp.path().join("sweep");
    let o = see(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--set",
        "L=2.5",
        "--set",
        "rx=0,ru=0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("sweep.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("L=2.5") && lines[1].contains("0.84"), "{text}");
    assert!(lines[2].starts_with("rx=0,ru=0") && lines[2].contains("0.04"), "{text}");
    assert!(out.join("run_0/summary.json").is_file() && out.join("run_1/summary.json").is_file());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
}

#[test]
fn baseline_writes_the_true_zone() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("base");
    let o = see(&["baseline", "--out", out.to_str().unwrap(), "--set", "system=double_integrator"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("baseline:"));
    assert!(out.join("baseline/zone.csv").is_file() && out.join("baseline/horizon.csv").is_file());
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    let bad = write_config(tmp.path(), r#"{"system": "double_integrator", "radius": 3}"#);
    let o = see(&["run", "--config", &bad, "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("radius"), "{}", stderr(&o));

    let o = see(&["run", "--out", out, "--set", "system=double_integrator", "--set", "gamma=2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    let o = see(&["run", "--config", "/nonexistent/config.json", "--out", out]);
    assert_eq!(o.status.code(), Some(1));

    let o = see(&["run"]);
    assert_eq!(o.status.code(), Some(1));

    let o = see(&["sweep", "--out", out, "--set", "system=cartpole"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("double_integrator"), "{}", stderr(&o));

    assert_eq!(see(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_reports_missing_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let o = see(&["verify", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_see"))
        .env("SEE_THREADS", "many")
        .args(["baseline", "--out", "/tmp/unused", "--set", "system=double_integrator"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("SEE_THREADS"));
}

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amd-forecast"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = run(&["inspect", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(dir.path(), r#"{"input": "w.csv", "anomaly": {"contamination": 0.9}}"#);
    let o = run(&["clean", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("anomaly.contamination"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), r#"{"input": "w.csv", "modle": {}}"#);
    assert_eq!(run(&["clean", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn train_without_clean_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"input": "data/weekly.csv"}"#);
    let o = run(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("daily.csv") && err.contains("clean"), "{err}");

    let o = run(&["forecast", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train"), "{}", stderr(&o));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"input": "data/weekly.csv"}"#);
    assert_eq!(run(&["inspect", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn synth_inspect_clean_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"input": "data/weekly.csv", "seed": 3}"#);
    let out = dir.path().join("elsewhere");
    let out_s = out.to_str().unwrap();
    for cmd in ["synth", "inspect", "clean"] {
        let o = run(&[cmd, "--config", &cfg, "--seed", "1", "--out", out_s]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    assert!(out.join("adf.csv").exists());
    assert!(out.join("daily.csv").exists());
    let stdout = String::from_utf8(run(&["inspect", "--config", &cfg, "--out", out_s]).stdout).unwrap();
    assert!(stdout.contains("non-stationary"), "{stdout}");
    assert!(!stdout.contains('\x1b'));
}

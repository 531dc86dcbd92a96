use std::path::Path;
use std::process::{Command, Output};

fn autobias(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autobias")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn contract_violations_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = autobias(dir.path(), &["--bias-init", "-40", "report"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bias_fo -40 outside [-35, 55]"), "{}", stderr(&out));

    let out = autobias(dir.path(), &["--duration", "5", "report"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("shorter than 20 s"));

    let out = autobias(dir.path(), &["--lux", "300", "report"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.conf"), "duration = 5\n").unwrap();
    // The file alone is invalid; the flag fixes it, so the run gets as far
    // as looking for time series.
    let out = autobias(dir.path(), &["--config", "exp.conf", "report"]);
    assert!(stderr(&out).contains("shorter than 20 s"));
    let out = autobias(dir.path(), &["--config", "exp.conf", "--duration", "30", "report"]);
    assert!(!out.status.success());
    assert!(!stderr(&out).contains("shorter than 20 s"), "{}", stderr(&out));
}

#[test]
fn run_without_a_model_explains_what_to_do() {
    let dir = tempfile::tempdir().unwrap();
    let out = autobias(dir.path(), &["run", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run `train` first"), "{}", stderr(&out));
}

#[test]
fn small_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--resolution", "32", "--out", "o", "gen-dataset", "--train", "4", "--val", "2", "--test", "2"];
    let out = autobias(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let labels = std::fs::read_to_string(dir.path().join("o/dataset/train.labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 5);
    assert!(labels.starts_with("index,label,frequency_hz,lux,bias_fo,clip,frame_index,seed\n"));
    let frm = std::fs::read(dir.path().join("o/dataset/train.frm")).unwrap();
    assert_eq!(&frm[..4], b"FRM1");
    assert_eq!(frm.len(), 4 + 2 + 2 + 4 + 4 * 32 * 32 * 4);
}

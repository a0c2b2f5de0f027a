mod common;

use std::process::Command;

use holonic::sim::read_metrics;
use holonic::{HolarchySpec, PresetName};

fn holonic() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holonic"))
}

#[test]
fn run_writes_one_row_per_terminal_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let status = holonic()
        .args(["run", "--preset", "hoal2l", "--rounds", "3", "--lr", "0.1", "--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let records = read_metrics(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(records.len(), 30);
    assert!(records.iter().all(|r| r.test_accuracy.is_some()));
}

#[test]
fn run_on_config_file_with_idx_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("h.toml");
    std::fs::write(&config, PresetName::Hfl { edges: 2, clients: 2 }.build().unwrap().to_config_text()).unwrap();
    let (images, labels) = common::digits_paths();
    let out = dir.path().join("m.csv");
    let status = holonic()
        .args(["run", "--model", "mlp", "--hidden", "8", "--partition", "ueqniid", "--rounds", "2", "--mode", "conc", "--config"])
        .arg(&config)
        .arg("--images")
        .arg(&images)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(read_metrics(std::fs::File::open(&out).unwrap()).unwrap().len(), 8);
}

#[test]
fn config_errors_exit_nonzero() {
    let missing = holonic().args(["run", "--config", "/nonexistent.toml", "--out", "/tmp/x.csv"]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no such file"));

    let too_few = holonic()
        .args(["run", "--preset", "fedavg-4", "--partition", "eqniid", "--samples-per-holon", "5000", "--out", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert!(!too_few.status.success());

    let unknown = holonic().args(["run", "--preset", "hoal9l"]).output().unwrap();
    assert!(!unknown.status.success());
}

#[test]
fn export_and_validate_presets() {
    let out = holonic().args(["export-preset", "hoal4l"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(HolarchySpec::parse(&text).unwrap(), PresetName::HoAL4L.build().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, &text).unwrap();
    assert!(holonic().arg("validate").arg(&good).output().unwrap().status.success());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("dataset = \"shard-3\"\n", "")).unwrap();
    let out = holonic().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("has no dataset"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aaroc::fom::read_snapshot_file;
use aaroc::harness::CsvDocument;

const TINY: &str = r#"{
  "problem": { "kind": "burgers", "n_cells": 30, "dt": 2e-3, "t_final": 0.2 },
  "training": { "count": 4, "spacing": "log-uniform" },
  "testing": { "count": 2, "spacing": "uniform", "range": [0.012, 0.095] },
  "greedy": { "gamma": 10, "n0": 2, "p_adap": 0.2, "n_add": 2, "n_adap_incre": 1,
              "n_adap_max": 3, "n_max": 4, "n_tpar_max": 2 }
}"#;

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn aaroc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aaroc"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn offline_then_online() {
    let dir = workdir("roundtrip");
    std::fs::write(dir.join("c.json"), TINY).unwrap();
    let out = aaroc(&["offline", "--config", "c.json", "--out", "model.bin"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("model.bin.history.csv").exists());

    let out = aaroc(&["online", "--artifact", "model.bin", "--mu", "0.03", "--out", "rom.bin"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = read_snapshot_file(&dir.join("rom.bin")).unwrap();
    assert_eq!((traj.rows(), traj.cols()), (31, 101));
    let doc = CsvDocument::parse(&std::fs::read_to_string(dir.join("rom.bin.residuals.csv")).unwrap()).unwrap();
    assert_eq!(doc.rows.len(), 100);

    // Outside the trained box: a warning, not a failure.
    let out = aaroc(&["online", "--artifact", "model.bin", "--mu", "0.5", "--out", "far.bin"], &dir);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
}

#[test]
fn fom_subcommand_writes_snapshots() {
    let dir = workdir("fom");
    std::fs::write(dir.join("c.json"), TINY).unwrap();
    let out = aaroc(&["fom", "--config", "c.json", "--mu", "0.05", "--out", "u.bin"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_snapshot_file(&dir.join("u.bin")).unwrap().cols(), 101);
}

#[test]
fn exit_codes() {
    let dir = workdir("codes");
    std::fs::write(dir.join("bad.json"), TINY.replace(r#""count": 4"#, r#""count": 0"#)).unwrap();
    let out = aaroc(&["bench", "--config", "bad.json", "--out-dir", "o"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training.count"));

    std::fs::write(dir.join("broken.json"), "{ \"problem\": ").unwrap();
    assert_eq!(aaroc(&["offline", "--config", "broken.json", "--out", "m.bin"], &dir).status.code(), Some(2));

    assert_eq!(aaroc(&["offline", "--bogus"], &dir).status.code(), Some(2));

    std::fs::write(dir.join("junk.bin"), b"not a model").unwrap();
    let out = aaroc(&["online", "--artifact", "junk.bin", "--mu", "0.05", "--out", "x.bin"], &dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("artifact"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sobolev-limits");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sobolev-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(command: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN).arg(command).arg("--config").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

const DEMO: &str = r#"{
  "n": 3, "beta": 4.0, "variant": "T1", "schedule_mode": "demo", "max_stage": 1, "seed": 11,
  "samples": {"jacobian": 200, "boundary_per_face": 20, "witness": 16, "witness_word": [7]},
  "slice": {"axes": [0, 2], "offset": 0.0, "cells": 8}
}"#;

#[test]
fn repeated_runs_write_identical_files() {
    let dir = scratch("determinism");
    let cfg = config(&dir, DEMO);
    for command in ["params", "verify-boundary", "verify-jacobian", "witness", "export-slice"] {
        let (a, b) = (dir.join("a"), dir.join("b"));
        assert!(run(command, &cfg, &a, &[]).status.success(), "{command}");
        assert!(run(command, &cfg, &b, &[]).status.success(), "{command}");
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{command} {name:?}");
        }
    }
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let dir = scratch("format");
    let cfg = config(&dir, DEMO);
    assert!(run("params", &cfg, &dir, &[]).status.success());
    let text = fs::read_to_string(dir.join("params.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("k,cube,a,c,"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[1], "3.1250000000000000e-2");
}

#[test]
fn stage_and_seed_flags_override_the_config() {
    let dir = scratch("override");
    let cfg = config(&dir, DEMO);
    assert!(run("params", &cfg, &dir, &["--stage", "3"]).status.success());
    let text = fs::read_to_string(dir.join("params.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn bad_fields_exit_with_code_two() {
    let dir = scratch("config");
    let cases = [
        (DEMO.replace("\"n\": 3", "\"n\": 4"), "n"),
        (DEMO.replace("\"beta\": 4.0", "\"beta\": 2.0"), "beta"),
        (DEMO.replace("\"cells\": 8", "\"cells\": 0"), "slice.cells"),
    ];
    for (body, name) in cases {
        let cfg = config(&dir, &body);
        let out = run("params", &cfg, &dir, &[]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("`{name}`")), "{err}");
    }
}

#[test]
fn malformed_json_reports_the_line() {
    let dir = scratch("syntax");
    let cfg = config(&dir, "{\n  \"n\": 3,\n  \"beta\": oops\n}");
    let out = run("params", &cfg, &dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn strict_schedule_refuses_map_commands() {
    let dir = scratch("strict");
    let cfg = config(&dir, &DEMO.replace("\"demo\"", "\"strict\""));
    for command in ["verify-jacobian", "verify-boundary", "witness", "export-slice"] {
        let out = run(command, &cfg, &dir, &[]);
        assert_eq!(out.status.code(), Some(2), "{command}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("schedule_mode"));
    }
    assert!(run("params", &cfg, &dir, &[]).status.success());
}

#[test]
fn strict_sobolev_table_passes() {
    let dir = scratch("strict-table");
    let cfg = config(&dir, &DEMO.replace("\"demo\"", "\"strict\"").replace("\"max_stage\": 1", "\"max_stage\": 6"));
    assert!(run("verify-sobolev", &cfg, &dir, &[]).status.success());
    let text = fs::read_to_string(dir.join("sobolev_strict.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn degree_fixtures() {
    let dir = scratch("degree");
    let body = DEMO.replace(
        "\"samples\"",
        r#""degree": {"fixture": "antipodal", "center": [0, 0, 0], "radius": 0.5, "targets": [[0.1, 0, 0], [0.9, 0, 0]]}, "samples""#,
    );
    let cfg = config(&dir, &body);
    assert!(run("degree", &cfg, &dir, &[]).status.success());
    let text = fs::read_to_string(dir.join("degree.csv")).unwrap();
    let degrees: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(8).unwrap()).collect();
    assert_eq!(degrees, ["-1", "0"]);
}

#[test]
fn degree_on_the_image_sphere_is_indeterminate() {
    let dir = scratch("indeterminate");
    let body = DEMO.replace(
        "\"samples\"",
        r#""degree": {"fixture": "identity", "center": [0, 0, 0], "radius": 0.5, "targets": [[0.5, 0, 0]]}, "samples""#,
    );
    let cfg = config(&dir, &body);
    assert_eq!(run("degree", &cfg, &dir, &[]).status.code(), Some(4));
}

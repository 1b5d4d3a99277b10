use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use poredry::config::DtMode;
use poredry::scenarios::bubble_rise;
use poredry::sim::RunManifest;
use poredry::SimConfig;

fn poredry(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poredry"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut c = bubble_rise(false).config;
    c.grid.nx = 16;
    c.grid.ny = 32;
    c.phase.epsilon = 0.25;
    c.time.t_end = None;
    c.time.max_steps = Some(3);
    let p = dir.join("tiny.toml");
    c.save(&p).unwrap();
    p
}

#[test]
fn scenario_prints_a_loadable_config() {
    let out = poredry(&["scenario", "electrode-coarse"]);
    assert!(out.status.success());
    let c = SimConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c.grid.nx, 192);
    assert_eq!(poredry(&["scenario", "nope"]).status.code(), Some(1));
}

#[test]
fn run_writes_manifest_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = poredry(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.steps, 3);
    assert!(out_dir.join("phi_tilde_0001.csv").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(poredry(&["run"]).status.code(), Some(1));
    assert_eq!(poredry(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = 3\n").unwrap();
    assert_eq!(poredry(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));

    let mut c = SimConfig::load(&tiny_config(dir.path())).unwrap();
    c.time.mode = DtMode::Fixed;
    c.time.dt = Some(10.0);
    let unstable = dir.path().join("unstable.toml");
    c.save(&unstable).unwrap();
    let out = poredry(&["run", "--config", unstable.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));
}

#[test]
fn sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = poredry(&["sweep", "--config", cfg, "--axis", "k_surf", "--values", "0.5,1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("k_surf,m,t_breakthrough,status"));

    let empty = poredry(&["sweep", "--config", cfg, "--axis", "k_surf", "--values="]);
    assert!(empty.status.success(), "{}", String::from_utf8_lossy(&empty.stderr));
    assert_eq!(String::from_utf8(empty.stdout).unwrap().lines().count(), 1);

    assert_eq!(
        poredry(&["sweep", "--config", cfg, "--axis", "gravity", "--values", "1"]).status.code(),
        Some(1)
    );
}

#[test]
fn validate_bubble_passes() {
    let out = poredry(&["validate", "--case", "bubble"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("PASS"));
}

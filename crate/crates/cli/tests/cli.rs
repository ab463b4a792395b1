use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn maxsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxsum")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn trivial_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = maxsum(&["run", "--config", arg(&configs().join("trivial.toml")), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sweep: PASS") && stdout.contains("probe-j: PASS"), "{stdout}");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["seed"], 1);
    assert!(out.join("sweep.csv").exists() && out.join("probe_j.csv").exists());
}

#[test]
fn missing_seed_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("trivial.toml")).unwrap().replace("seed = 1\n", "");
    let cfg = tmp.path().join("noseed.toml");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = maxsum(&["run", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    // The seed may come from the command line instead.
    let o = maxsum(&["sweep", "--config", arg(&cfg), "--out", arg(&out), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[sweep]\nreplicates = \"many\"\n").unwrap();
    assert_eq!(maxsum(&["run", "--config", arg(&cfg)]).status.code(), Some(2));
    let o = maxsum(&["run", "--config", arg(&tmp.path().join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "2")] {
        let o = maxsum(&["run", "--config", arg(&configs().join("risk.toml")), "--out", arg(dir), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ca, cb) = (csvs(&a), csvs(&b));
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
}

#[test]
fn preset_catalog() {
    let o = maxsum(&["presets"]);
    assert_eq!(o.status.code(), Some(0));
    let cat: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = cat.as_array().unwrap();
    assert!(entries.len() >= 8);
    let ex2 = entries.iter().find(|e| e["name"] == "example2_insurance").unwrap();
    let default = |name: &str| ex2["params"].as_array().unwrap().iter().find(|p| p["name"] == name).unwrap()["default"].as_f64().unwrap();
    assert_eq!(default("rate"), 1.0);
    assert_eq!(default("alpha"), 2.5);
}

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
trials = 3
pilot_budgets = [2, 4]
regimes = ["near"]

[array]
n_h = 4
n_v = 4
"#;

fn aris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aris")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().next().unwrap_or_default()).expect("json on stderr")
}

#[test]
fn run_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = aris(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    // header + regimes × modes × models × trials × budgets
    assert_eq!(trials.lines().count(), 1 + 2 * 2 * 3 * 2);
    assert!(out_dir.join("aggregate.csv").exists());
    assert!(out_dir.join("mismatch.csv").exists());
}

#[test]
fn run_json_is_deterministic_and_sequential_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut docs = Vec::new();
    for (i, extra) in [&[][..], &["--sequential"][..]].iter().enumerate() {
        let out_dir = dir.path().join(format!("o{i}"));
        let mut args = vec!["run", "--config", &cfg, "--format", "json", "--mode", "active", "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = aris(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        docs.push(std::fs::read_to_string(out_dir.join("results.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
    let v: serde_json::Value = serde_json::from_str(&docs[0]).unwrap();
    assert_eq!(v["trials"].as_array().unwrap().len(), 2 * 3 * 2);
}

#[test]
fn invalid_config_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "trials = 0\n[power]\nris_fraction = 1.5\n");
    let out = aris(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "invalid");
    assert!(v["fields"].as_array().unwrap().len() >= 2);
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\nn_x = 4\n");
    let out = aris(&["codebook", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = aris(&["single", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn codebook_export_to_stdout_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = aris(&["codebook", "--config", &cfg, "--model", "far"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# model=far n_h=4 n_v=4"));

    let file = dir.path().join("near.txt");
    let out = aris(&["codebook", "--config", &cfg, "--model", "near", "--out", file.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(file).unwrap().starts_with("# model=near"));

    let out = aris(&["codebook", "--model", "both"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = aris(&["single", "--config", &cfg, "--mode", "passive", "--trial", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mode=passive"));
    // two-pilot round, then one round per extra pilot up to the max budget
    let rounds = text.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).count();
    assert_eq!(rounds, 3);
    assert!(text.lines().any(|l| l.trim_start().starts_with("true")));
}

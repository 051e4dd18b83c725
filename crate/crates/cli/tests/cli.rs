//! Driver-level contracts: exit codes, field-level config errors, manifest
//! completeness, and the partial-artifacts flag.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn run_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentflow"))
        .args(args)
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn blob_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

#[test]
fn unknown_kind_exits_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.json", r#"{"kind": "frobnicate", "seed": 1}"#);
    let out_dir = dir.path().join("out");
    let out = run_bin(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists(), "unknown kind must not create artifacts");
}

#[test]
fn missing_field_exits_nonzero_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    // train-latent without train_size
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "train-latent", "seed": 1, "target_atoms": [[0.5]]}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run_bin(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("config.train_size"), "stderr was: {msg}");
    assert!(!out_dir.exists());
}

#[test]
fn sweep_needs_two_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "rate-sweep", "seed": 1, "target_atoms": [[0.5]], "axis": "steps", "values": [8]}"#,
    );
    let out = run_bin(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config.values"));
}

#[test]
fn manifest_lists_all_artifacts_with_matching_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "construct", "seed": 3, "d_patch": 1, "tokens": 2, "exponents": [[1,2]]}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run_bin(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["version"].as_str().unwrap(), env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["seed"], 3);
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(artifacts.contains_key("metrics/construct.csv"));
    assert!(artifacts.contains_key("checkpoints/monomial_0.json"));
    for (rel, hash) in artifacts {
        let bytes = fs::read(out_dir.join(rel)).unwrap();
        assert_eq!(hash.as_str().unwrap(), blob_hash(&bytes), "hash mismatch for {rel}");
    }
}

#[test]
fn runtime_failure_flags_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // passes validation but fails at runtime: empty training set
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "train-latent", "seed": 1, "target_atoms": [[0.5]], "train_size": 0}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run_bin(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], true);
}

#[test]
fn single_seed_sweep_flagged_noise_unqualified() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "rate-sweep", "seed": 5, "target_atoms": [[0.8]], "axis": "steps", "values": [8, 16], "sample_count": 16}"#,
    );
    let out_dir = dir.path().join("out");
    assert!(run_bin(&["run", &cfg, "--out", out_dir.to_str().unwrap()]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["noise_qualified"], false);

    // two seeds qualify
    let cfg2 = write_cfg(
        dir.path(),
        "cfg2.json",
        r#"{"kind": "rate-sweep", "seed": 5, "seeds": [5, 6], "target_atoms": [[0.8]], "axis": "steps", "values": [8, 16], "sample_count": 16}"#,
    );
    let out_dir2 = dir.path().join("out2");
    assert!(run_bin(&["run", &cfg2, "--out", out_dir2.to_str().unwrap()]).status.success());
    let manifest2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir2.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest2["noise_qualified"], true);
}

#[test]
fn sweep_subcommand_overrides_axis_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "train-latent", "seed": 5, "target_atoms": [[0.8]], "train_size": 16, "sample_count": 16}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run_bin(&[
        "sweep",
        &cfg,
        "--axis",
        "steps",
        "--values",
        "8,16",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("metrics/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,value,seed,metric,value_mean,value_stderr,loglog_slope"
    );
    assert!(lines.next().unwrap().starts_with("steps,"));
}

#[test]
fn unknown_config_field_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "cfg.json",
        r#"{"kind": "construct", "seed": 1, "d_patch": 1, "tokens": 1, "exponents": [[1]], "typo_field": 3}"#,
    );
    let out = run_bin(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deferkit"))
        .args(args)
        .env("DEFERKIT_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn ok_json(root: &Path, args: &[&str]) -> Value {
    let out = run(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const QUICK: [&str; 6] = ["--set", "data.n=120", "--set", "train.epochs=2", "--set", "eval.grid_resolution=101"];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn verify_on_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["verify", "--preset", "blobs-class", "--set", "eval.grid_resolution=201"]);
    assert_eq!(v["passed"], true);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/blobs-class/verify.json")).unwrap()).unwrap();
    assert!(file["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(&["train", "--preset", "blobs-class"], &QUICK);
    ok_json(dir.path(), &args);
    let ck = dir.path().join("runs/blobs-class/model-rerm.json");
    let first = std::fs::read(&ck).unwrap();
    ok_json(dir.path(), &args);
    assert_eq!(first, std::fs::read(&ck).unwrap());
}

#[test]
fn gamma_zero_eval_matches_clean() {
    let dir = tempfile::tempdir().unwrap();
    let base = with(&["--preset", "blobs-class", "--set", "loss.gamma=0"], &QUICK);
    ok_json(dir.path(), &with(&["train"], &base));
    let v = ok_json(dir.path(), &with(&["eval"], &base));
    let r = &v["report"];
    assert_eq!(r["c_acc"], r["u_acc"]);
    assert_eq!(r["c_acc"], r["t_acc"]);
    let modes = r["modes"].as_array().unwrap();
    for m in &modes[1..] {
        assert_eq!(m["deferral_rate"], modes[0]["deferral_rate"]);
        assert_eq!(m["realized_def_loss"], modes[0]["realized_def_loss"]);
    }
}

#[test]
fn full_pipeline_embeds_config_hash_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let base = with(&["--preset", "linreg-defer"], &QUICK);
    let hash = ok_json(dir.path(), &with(&["config"], &base))["config_hash"].as_str().unwrap().to_string();
    ok_json(dir.path(), &with(&["gen"], &base));
    ok_json(dir.path(), &with(&["train"], &base));
    ok_json(dir.path(), &with(&["train", "--method", "baseline"], &base));
    ok_json(dir.path(), &with(&["attack"], &base));
    ok_json(dir.path(), &with(&["eval"], &base));
    ok_json(dir.path(), &with(&["eval", "--checkpoint", dir.path().join("runs/linreg-defer/model-baseline.json").to_str().unwrap()], &base));
    ok_json(dir.path(), &with(&["verify", "--checkpoint", dir.path().join("runs/linreg-defer/model-rerm.json").to_str().unwrap()], &base));
    ok_json(dir.path(), &with(&["report"], &base));
    let out = dir.path().join("runs/linreg-defer");
    let mut seen = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains(&hash), "{} lacks the config hash", p.display());
        seen += 1;
    }
    // dataset, experts, 3 manifests, 2 models, 2 adversarial dumps,
    // 2 x (json + csv) metrics, verify, summary csv + md
    assert_eq!(seen, 16);
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["train", "--preset", "blobs-class", "--set", "loss.gamma=-0.5", "--set", "eval.nu=42", "--set", "cost.fees=[0.1]"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["error"]["kind"], "config");
    let msgs = err["error"]["messages"].as_array().unwrap();
    assert!(msgs.len() >= 3, "{msgs:?}");
    let text = msgs.iter().map(|m| m.as_str().unwrap()).collect::<Vec<_>>().join("\n");
    assert!(text.contains("loss.gamma") && text.contains("eval.nu") && text.contains("cost.fees"));
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &with(&["train", "--preset", "blobs-class"], &QUICK));
    let ck = dir.path().join("runs/blobs-class/model-rerm.json");
    let out = run(dir.path(), &with(&["eval", "--preset", "linreg-defer", "--checkpoint", ck.to_str().unwrap()], &QUICK));
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["messages"][0].as_str().unwrap().contains("Classification"));
}

#[test]
fn missing_checkpoint_and_unknown_preset_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["eval", "--preset", "blobs-class"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(serde_json::from_slice::<Value>(&out.stderr).is_ok());
    let out = run(dir.path(), &["gen", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["config", "--preset", "linreg-defer"]);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string(&v["config"]).unwrap()).unwrap();
    let w = ok_json(dir.path(), &["config", "--config", path.to_str().unwrap()]);
    assert_eq!(v["config_hash"], w["config_hash"]);
}

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_promptpolicy"))
        .arg("--seed")
        .arg("42")
        .arg("--set")
        .arg(format!("paths.work_dir=\"{}\"", dir.display()))
        .args(["--set", "world.n_users=40", "--set", "world.n_pois=150"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("reports").join(format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for stage in ["simulate", "ingest", "build-kg"] {
        ok(&run(dir, &[stage]));
    }
    // no posterior yet
    let out = run(dir, &["evaluate"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    ok(&run(dir, &["train"]));
    assert!(dir.join("posterior.bin").exists());
    ok(&run(dir, &["evaluate"]));
    let full = report(dir, "full");
    assert_eq!(full["rows"][0]["label"], "full");
    assert_eq!(full["meta"]["seed"], 42);
    assert!(full["rows"][0]["acc"]["acc@1"].as_f64().is_some());

    // idempotent under the sim backend
    let first = std::fs::read(dir.join("reports/full.json")).unwrap();
    ok(&run(dir, &["evaluate"]));
    assert_eq!(first, std::fs::read(dir.join("reports/full.json")).unwrap());

    ok(&run(dir, &["ablate"]));
    let labels: Vec<String> =
        report(dir, "ablation")["rows"].as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap().to_string()).collect();
    assert_eq!(labels, ["full", "wo_plc", "wo_rtnl"]);

    ok(&run(dir, &["sensitivity"]));
    let ms: Vec<u64> =
        report(dir, "sensitivity")["rows"].as_array().unwrap().iter().map(|r| r["m"].as_u64().unwrap()).collect();
    assert_eq!(ms, [5, 10, 15, 20]);
    let md = std::fs::read_to_string(dir.join("reports/sensitivity.md")).unwrap();
    assert!(md.contains("M=10"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["--set", "reward.tau=-1", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));

    let out = run(tmp.path(), &["--set", "reward.bogus=1", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reward.bogus"));

    let out = run(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["build-kg"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_override_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\n[reward]\ntau = 3000.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_promptpolicy"))
        .arg("--config")
        .arg(&cfg)
        .args(["--set", "reward.tau=0"])
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

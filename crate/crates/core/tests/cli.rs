use std::path::Path;
use std::process::{Command, Output};

use rewrite_align::pipeline::{self, paths};

const TINY: &str = r#"
seed = 11

[generator]
train_per_task = 40
eval_per_task = 12

[rm]
steps = 300
eval_every = 100

[rl]
warmup_steps = 5
max_steps = 40
batch_episodes = 8
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rewrite-align"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn missing_stage_prints_one_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["sft"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"], "missing_artifact");
    assert!(line["message"].as_str().unwrap().contains("run gen-data first"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[rl]\nbeta = -1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rewrite-align"))
        .arg("--config")
        .arg(&cfg)
        .arg("gen-data")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"], "config");
}

#[test]
fn staged_run_writes_reports_and_valid_manifests() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["gen-data", "sft", "train-rm", "rl", "eval", "sxs"] {
        let out = run(dir.path(), &[stage]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let run_dir = dir.path().join("run");
    for stage in ["gen-data", "sft", "train-rm", "rl", "eval", "sxs"] {
        assert!(pipeline::verify_manifest(&run_dir, stage).unwrap().is_empty(), "{stage}");
    }
    let tsv = std::fs::read_to_string(run_dir.join(paths::EVAL_TSV)).unwrap();
    let mut lines = tsv.lines();
    assert!(lines.next().unwrap().starts_with("Policy\tTask\tCount\tLength\tAgreement\tCoherence\tEditRatio\tF1@"));
    assert_eq!(lines.count(), 9);
    let log = std::fs::read_to_string(run_dir.join(paths::RL_TASK_LOG)).unwrap();
    assert!(log.starts_with("step,task,mean_r_agr,mean_r_coh,mean_r_con,mean_aggregate,kl\n"));
    let sxs = std::fs::read_to_string(run_dir.join(paths::SXS_TSV)).unwrap();
    assert!(sxs.lines().count() > 1);
}

#[test]
fn oracle_run_skips_reward_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--oracle-rewards", "all"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Policy\t"));
    assert!(!dir.path().join("run").join(paths::RM_AGREEMENT).exists());
}

use std::path::Path;
use std::process::{Command, Output};

fn lhiqn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lhiqn")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"
[env]
kind = "meeting"
grid_size = 3

[agent]
algorithm = "hdqn"
recurrent = false
batch_size = 4
warmup_steps = 100

[run]
total_steps = 400
eval_period = 200
eval_episodes = 2
final_eval_episodes = 2
seeds = [0]
"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn train_eval_and_aggregate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.display().to_string();
    ok(&lhiqn(&["train", "--config", &config, "--seeds", "1,2", "--out", &out_s]));
    for seed in [1, 2] {
        assert!(out.join(format!("seed-{seed}.csv")).exists());
        assert!(out.join(format!("seed-{seed}.ckpt")).exists());
    }
    let ckpt = out.join("seed-1.ckpt").display().to_string();
    let text = ok(&lhiqn(&["eval", "--checkpoint", &ckpt, "--episodes", "3"]));
    assert!(text.contains("return"), "{text}");

    let summary = dir.path().join("summary.csv");
    let a = out.join("seed-1.csv").display().to_string();
    let b = out.join("seed-2.csv").display().to_string();
    ok(&lhiqn(&["aggregate", "--inputs", &a, &b, "--out", &summary.display().to_string()]));
    let csv = std::fs::read_to_string(summary).unwrap();
    assert!(csv.starts_with("step,metric,mean,std,n"));
    assert!(csv.contains("400,eval_return,"));
}

#[test]
fn step_override_shortens_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("short");
    ok(&lhiqn(&["train", "--config", &config, "--out", &out.display().to_string(), "--steps", "200"]));
    let text = std::fs::read_to_string(out.join("seed-0.csv")).unwrap();
    assert_eq!(text.lines().last().unwrap().split(',').next(), Some("200"));
}

#[test]
fn debug_env_renders_frames() {
    for kind in ["meeting", "cmotp"] {
        let text = ok(&lhiqn(&["debug-env", "--kind", kind, "--seed", "3"]));
        assert!(text.lines().count() > 5, "{text}");
    }
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[agent]\nunknown_key = 1\n").unwrap();
    let out = lhiqn(&["train", "--config", &path.display().to_string()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown"));
}

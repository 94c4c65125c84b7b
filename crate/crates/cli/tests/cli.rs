use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
episodes = 2
explorer = "trajopt"

[env]
name = "peg2d"
image_size = 8
channels = 1
peg_radius = 1.0

[demos]
total = 4
positive = 2
seed_replay = 1

[embedding]
latent_dim = 3
conv_channels = [2, 2, 2]
epochs = 2
batch_size = 8

[dynamics]
hidden = [8, 8]
pretrain_steps = 5
steps_per_episode = 3
batch_size = 8

[agent]
critic = "v"
hidden = [8, 8]
batch_size = 8
train_steps_per_episode = 3

[planner]
horizon = 2
max_iters = 3
"#;

fn lato(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lato"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LATO_OUT_DIR")
        .env_remove("LATO_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = lato(args, cwd);
    assert!(
        out.status.success(),
        "lato {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_pipeline_through_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(root.join("tiny.toml"), TINY).unwrap();

    ok(&["demos", "--config", "tiny.toml", "--out", "demos"], root);
    ok(&["pretrain", "--config", "tiny.toml", "--out", "pre", "--demos", "demos"], root);
    assert!(root.join("pre/pretrain").is_dir());

    ok(
        &["train", "--config", "tiny.toml", "--out", "traj", "--seed", "0", "--seed", "1", "--pretrained", "pre"],
        root,
    );
    ok(
        &["train", "--config", "tiny.toml", "--out", "ou", "--seed", "3", "--explorer", "ou", "--label", "baseline"],
        root,
    );
    for dir in ["traj/seed_0", "traj/seed_1", "ou"] {
        let status = std::fs::read_to_string(root.join(dir).join("status.json")).unwrap();
        assert!(status.contains("completed"), "{dir}: {status}");
    }
    assert!(root.join("traj/seed_0/planner_trace.jsonl").is_file());
    assert!(!root.join("ou/planner_trace.jsonl").exists());

    let eval = ok(&["eval", "--run", "traj/seed_0", "--episodes", "2"], root);
    assert_eq!(eval.lines().count(), 2);

    let table = ok(&["report", "--out", "report", "traj/seed_0", "traj/seed_1", "ou"], root);
    assert!(table.contains("baseline"));
    assert!(table.contains("v-trajopt-h2"));
    assert!(root.join("report/success_table.csv").is_file());
}

#[test]
fn bad_config_exits_with_failure() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "episodes = 1\nunknown_key = 3\n").unwrap();
    let out = lato(&["train", "--config", "bad.toml", "--out", "run", "--seed", "0"], tmp.path());
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn out_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("tiny.toml"), TINY).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lato"))
        .args(["demos", "--config", "tiny.toml"])
        .current_dir(tmp.path())
        .env("LATO_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("from_env").is_dir());
}

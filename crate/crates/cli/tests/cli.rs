use std::path::Path;
use std::process::{Command, Output};

fn semg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semg")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap()
}

const SMALL: &str = "seed = 3
[data.synthetic]
n_classes = 3
hold_duration = 1.0
rest_duration = 0.5
[train]
max_rounds = 15
[ensemble]
k = 2
";

#[test]
fn synth_train_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();

    let out = semg(&["synth", "--config", "small.toml", "--out", "rec.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(d.join("rec.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("ch1,ch2") && header.ends_with("stimulus,repetition"));

    for run in ["a", "b"] {
        let out = semg(&["train", "--config", "small.toml", "--out", run], d);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
        assert!(d.join(run).join("model/plan_3/manifest.json").exists());
    }
    assert_eq!(std::fs::read(d.join("a/per_movement.csv")).unwrap(), std::fs::read(d.join("b/per_movement.csv")).unwrap());

    let out = semg(&["run", "--mode", "evaluate", "--config", "small.toml", "--out", "a"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = semg(&["report", "--runs", "a", "b", "--names", "first", "second", "--out", "cmp"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(d.join("cmp/stages.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("first,second"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\nlearning_rat = 0.1\n").unwrap();
    let out = semg(&["train", "--config", "bad.toml", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    let out = semg(&["report", "--runs", "missing", "--out", "o"], dir.path());
    assert!(!out.status.success());
}

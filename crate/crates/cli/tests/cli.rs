use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "
seed = 2
scene.frames = 24
data.sequence_length = 12
model.snippet_len = 4
model.chirps = 4
model.channel_div = 16
model.stages = 2
model.front_kernel = 3,3,3
model.body_kernel = 3,3,3
model.up_kernel = 4
model.inception_lengths = 1,3,5
model.offset_kernel = 1,3,3
train.frames = 0..12
train.max_steps = 2
infer.frames = 12..24
infer.stride = 2
eval.frames = 12..24
";

fn rodforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rodforge")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn full_run_succeeds_and_prints_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out").display().to_string();
    for cmd in ["simulate", "annotate", "train", "infer"] {
        let o = rodforge(&[cmd, "--config", &cfg, "--out", &out]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty(), "{cmd} wrote to stdout");
    }
    let o = rodforge(&["evaluate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("ap="), "{text}");
    assert!(Path::new(&out).join("eval.txt").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub).display().to_string();
        assert_eq!(rodforge(&["simulate", "--config", &cfg, "--seed", seed, "--out", &out]).status.code(), Some(0));
        std::fs::read(Path::new(&out).join("rf/frame_000000.rfd")).unwrap()
    };
    assert_eq!(run("2", "a"), run("2", "b"));
    assert_ne!(run("2", "a"), run("3", "c"));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["radar.range_bins = 31\n", "no_such_key = 1\n", "scene.frames = 30\n", "train.lr = -1\n", "garbage\n"] {
        let cfg = write_config(dir.path(), &format!("{SMALL}{bad}"));
        let o = rodforge(&["simulate", "--config", &cfg, "--out", &dir.path().join("o").display().to_string()]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(rodforge(&["simulate"]).status.code(), Some(2));
    assert_eq!(rodforge(&["frobnicate", "--config", "x"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("empty").display().to_string();
    let o = rodforge(&["infer", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let missing = dir.path().join("nope.cfg").display().to_string();
    assert_eq!(rodforge(&["simulate", "--config", &missing]).status.code(), Some(1));
}

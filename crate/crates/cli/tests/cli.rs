use std::path::Path;
use std::process::{Command, Output};

fn defilter(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defilter"))
        .args(["--profile", "desk", "--stage-dir"])
        .arg(dir.join("stages"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[data]\ntrain_identities = 3\ntrain_sessions = 1\neval_identities = 2\neval_sessions = 3\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_upstream_exits_with_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let out = defilter(tmp.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("remove"), "{err}");
}

#[test]
fn bad_config_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[segnet_train]\niters = 5\n").unwrap();
    let out = defilter(tmp.path(), &["--config", path.to_str().unwrap(), "synth"]);
    assert_eq!(out.status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_defilter"))
        .args(["--profile", "laptop", "synth", "--stage-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn second_run_reuses_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let first = defilter(tmp.path(), &["--config", &cfg, "synth"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let first = String::from_utf8_lossy(&first.stdout).into_owned();
    assert!(first.contains("built"), "{first}");

    let second = defilter(tmp.path(), &["--config", &cfg, "synth"]);
    let second = String::from_utf8_lossy(&second.stdout).into_owned();
    assert!(second.contains("up to date"), "{second}");
    let hash = |s: &str| s.split_whitespace().last().unwrap().to_string();
    assert_eq!(hash(&first), hash(&second));
    assert!(tmp.path().join("stages/synth/stage.json").is_file());
}

#[test]
fn changed_config_makes_downstream_stale() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    assert!(defilter(tmp.path(), &["--config", &cfg, "synth"]).status.success());
    // a different seed rebuilds synth's config hash, so augment cannot trust the old synth
    let out = defilter(tmp.path(), &["--config", &cfg, "--seed", "99", "augment"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

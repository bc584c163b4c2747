use std::path::Path;
use std::process::{Command, Output};

fn guidyn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guidyn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    let shown = guidyn(dir, &["show-config"]);
    assert!(shown.status.success());
    let text = String::from_utf8(shown.stdout).unwrap()
        .replace("states_per_app = 300", "states_per_app = 60")
        .replace("budget_per_worker = 400", "budget_per_worker = 60");
    std::fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn run_prints_funnel_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = guidyn(&a, &["run", "--config", cfg, "--workers", "1"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8(first.stdout).unwrap();
    assert!(stdout.contains("post_semantic"), "{stdout}");
    let second = guidyn(&b, &["run", "--config", cfg, "--workers", "4"]);
    assert!(second.status.success());
    assert_eq!(stdout, String::from_utf8(second.stdout).unwrap());
    let corpus = |d: &Path| std::fs::read(d.join("mix").join("manifest.json")).unwrap();
    assert_eq!(corpus(&a), corpus(&b));

    let ok = guidyn(&a, &["verify", "mix", "--config", cfg]);
    assert!(ok.status.success());
}

#[test]
fn missing_upstream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = guidyn(dir.path(), &["mix"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error ["));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = \"not a number\"\n").unwrap();
    let out = guidyn(dir.path(), &["gen-env", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_stage_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert!(guidyn(dir.path(), &["gen-env", "--config", cfg]).status.success());
    assert!(guidyn(dir.path(), &["explore", "--config", cfg]).status.success());
    let shards = dir.path().join("raw").join("shards");
    let victim = std::fs::read_dir(&shards).unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[5] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    assert_eq!(guidyn(dir.path(), &["verify", "explore", "--config", cfg]).status.code(), Some(4));
    assert_eq!(guidyn(dir.path(), &["dedup-struct", "--config", cfg]).status.code(), Some(4));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn richcld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_richcld")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn dry_run_prints_the_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = richcld(&["golf", "--dry-run", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let plan = String::from_utf8(o.stdout).unwrap();
    assert!(plan.contains("command: golf") && plan.contains("seeds: 4"), "{plan}");
    assert!(!out.exists());
}

#[test]
fn theory_checks_pass_and_write_the_run_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = richcld(&["theory-checks", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(read(dir.path(), "theory-report.txt")).unwrap();
    assert!(report.ends_with("overall: PASS\n"));
    for f in ["resolved.toml", "seed", "version", "metrics.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn rerunning_the_resolved_config_reproduces_the_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = richcld(&["offline", "--seed", "7", "--threads", "1", "--out", a.to_str().unwrap()]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let config = a.join("resolved.toml");
    let second = richcld(&["offline", "--config", config.to_str().unwrap(), "--seed", "7", "--out", b.to_str().unwrap()]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    for name in ["metrics.csv", "seed-7-evaluation.csv", "seed-7-regret.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "algorithm = \"criee\"\nmystery = 1\n").unwrap();
    let o = richcld(&["criee", "--config", path.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mystery"));
    let o = richcld(&["golf", "--config", path.to_str().unwrap(), "--dry-run"]);
    assert!(!o.status.success(), "criee config under the golf command");
}

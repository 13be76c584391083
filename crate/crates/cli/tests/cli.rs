use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcl::adversary::StrategyKind;
use rcl::{AllocatorKind, ScenarioConfig, CSV_HEADER};

fn small(kind: AllocatorKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::honest(kind, 0.01);
    cfg.r_a = 20;
    cfg.horizon = 600;
    cfg.seeds = vec![0, 1];
    cfg
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn rcl(args: &[&str], offset: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rcl"));
    cmd.args(args).env_remove("RCL_SEED_OFFSET");
    if let Some(o) = offset {
        cmd.env("RCL_SEED_OFFSET", o);
    }
    cmd.output().unwrap()
}

fn run(cfg: &Path, out: &Path, extra: &[&str], offset: Option<&str>) -> Output {
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    rcl(&args, offset)
}

fn seeds_in(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect()
}

#[test]
fn honest_run_exits_zero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pow));
    let out = dir.path().join("out.csv");
    let o = run(&cfg, &out, &["--quiet"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(seeds_in(&csv), ["0", "1", "AGG"]);
    assert!(o.stderr.is_empty());
}

#[test]
fn progress_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pos));
    let out = dir.path().join("out.csv");
    let o = run(&cfg, &out, &[], None);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("seed 0:") && err.contains("seed 1:"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn seed_range_trials_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pow));
    let out = dir.path().join("out.csv");

    assert_eq!(run(&cfg, &out, &["--quiet", "--seeds", "5..8"], None).status.code(), Some(0));
    assert_eq!(seeds_in(&std::fs::read_to_string(&out).unwrap()), ["5", "6", "7", "AGG"]);

    assert_eq!(run(&cfg, &out, &["--quiet", "--trials", "3"], Some("10")).status.code(), Some(0));
    assert_eq!(seeds_in(&std::fs::read_to_string(&out).unwrap()), ["10", "11", "12", "AGG"]);
}

#[test]
fn offset_rows_match_unshifted_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Space));
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run(&cfg, &a, &["--quiet", "--seeds", "3..4"], None);
    run(&cfg, &b, &["--quiet", "--seeds", "0..1"], Some("3"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pos));
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run(&cfg, &a, &["--quiet"], None);
    run(&cfg, &b, &["--quiet"], None);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn attack_with_violations_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ScenarioConfig::honest(AllocatorKind::Pos, 0.01);
    c.n_processes = 17;
    c.r_a = 34;
    c.delta = 2;
    c.horizon = 20_000;
    c.seeds = vec![0];
    c.attack.strategy = StrategyKind::LongRange;
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out.csv");
    let o = run(&cfg, &out, &["--quiet"], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "long_range");
    assert_ne!(row[9], "0", "to_violations");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(AllocatorKind::Pow);
    c.horizon = 10;
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out.csv");
    let o = run(&cfg, &out, &[], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));
    assert!(!out.exists());
}

#[test]
fn unreadable_and_unparsable_configs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let missing = dir.path().join("missing.json");
    let o = run(&missing, &out, &[], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": 1, \"unknown\": true}").unwrap();
    assert_eq!(run(&bad, &out, &[], None).status.code(), Some(1));
}

#[test]
fn unwritable_output_echoes_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pow));
    let out = dir.path().join("no-such-dir").join("out.csv");
    let o = run(&cfg, &out, &["--quiet"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-dir"));
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small(AllocatorKind::Pow));
    let out = dir.path().join("out.csv");
    assert_ne!(run(&cfg, &out, &["--seeds", "9..3"], None).status.code(), Some(0));
    assert_eq!(run(&cfg, &out, &["--quiet"], Some("x")).status.code(), Some(1));
}

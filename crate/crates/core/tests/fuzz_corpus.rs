//! Replays the checked-in fuzz corpus through the same checks as the fuzz
//! targets, so the seeds stay valid inputs on stable toolchains.

use std::path::PathBuf;

use rcl::{Block, Digest, ScenarioConfig, Transaction};

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| std::fs::read(f).unwrap()).collect()
}

#[test]
fn block_seeds_round_trip() {
    for data in corpus("block_decode") {
        assert_eq!(Block::decode(&data).unwrap().encode(), data);
    }
}

#[test]
fn tx_seeds_round_trip() {
    for data in corpus("tx_decode") {
        assert_eq!(Transaction::decode(&data).unwrap().encode(), data);
    }
}

#[test]
fn config_seeds_validate_and_round_trip() {
    for data in corpus("config_json") {
        let cfg = ScenarioConfig::from_json(std::str::from_utf8(&data).unwrap()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn digest_seeds_parse() {
    for data in corpus("digest_hex") {
        let d = Digest::from_hex(std::str::from_utf8(&data).unwrap()).unwrap();
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
    }
}

#[test]
fn derived_windows_saturate_on_vanishing_rate() {
    let mut cfg = ScenarioConfig::honest(rcl::AllocatorKind::Pow, 1e-300);
    cfg.steps_per_slot = u64::MAX;
    cfg.k = usize::MAX;
    cfg.q = None;
    assert_eq!(cfg.rho_honest(), 0.0);
    assert_eq!(cfg.liveness_window(), u64::MAX);
    assert_eq!(cfg.agreement_slack(), u64::MAX);
    assert_eq!(cfg.settle(), u64::MAX);
    assert_eq!(cfg.q(), u64::MAX);
    assert_eq!(cfg.release_step(), u64::MAX);
    assert!(cfg.validate().is_err());
}

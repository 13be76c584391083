//! Fuzz target: scenario config parsing and validation.
//!
//! Parsing and validating must never panic, and every accepted config
//! survives a serialize/parse round trip.
//!
//! Run: cargo +nightly fuzz run config_json -- -max_len=4096

#![no_main]
use libfuzzer_sys::fuzz_target;
use rcl::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ScenarioConfig::from_json(s) else { return };
    if cfg.validate().is_ok() {
        let _ = cfg.warnings();
        let _ = (cfg.liveness_window(), cfg.agreement_slack(), cfg.settle(), cfg.release_step());
    }
    assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).ok(), Some(cfg));
});

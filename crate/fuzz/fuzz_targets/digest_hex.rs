//! Fuzz target: hex digest parsing.
//!
//! Accepted strings round-trip through the lowercase hex form.
//!
//! Run: cargo +nightly fuzz run digest_hex

#![no_main]
use libfuzzer_sys::fuzz_target;
use rcl::Digest;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Some(d) = Digest::from_hex(s) {
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
    }
});

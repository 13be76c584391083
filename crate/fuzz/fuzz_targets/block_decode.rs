//! Fuzz target: binary block decoding.
//!
//! Any input either fails to decode or re-encodes to exactly the same bytes.
//!
//! Run: cargo +nightly fuzz run block_decode

#![no_main]
use libfuzzer_sys::fuzz_target;
use rcl::Block;

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = Block::decode(data) {
        assert_eq!(b.encode(), data);
    }
});

//! Fuzz target: binary transaction decoding.
//!
//! Any input either fails to decode or re-encodes to exactly the same bytes.
//!
//! Run: cargo +nightly fuzz run tx_decode

#![no_main]
use libfuzzer_sys::fuzz_target;
use rcl::Transaction;

fuzz_target!(|data: &[u8]| {
    if let Ok(tx) = Transaction::decode(data) {
        assert_eq!(tx.encode(), data);
    }
});

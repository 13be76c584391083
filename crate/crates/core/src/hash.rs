//! Idealized random oracle.
//!
//! The oracle is a keyed PRF over `(scenario seed, input)`, truncated to a
//! 64-bit digest. Equal inputs always map to equal digests within a run.

use std::fmt;

use sha2::{Digest as _, Sha256};

/// Output width of the oracle in bits.
pub const LAMBDA: u32 = 64;

/// A λ-bit oracle output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u64);

impl Digest {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(Digest)
    }

    /// Maps the digest to a uniform value in `[0, 1)` with 53 bits of precision.
    pub fn unit(self) -> f64 {
        (self.0 >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Keyed hash oracle shared by every component of one simulation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Oracle {
    key: u64,
}

impl Oracle {
    pub fn new(seed: u64) -> Self {
        Oracle { key: seed }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn hash(&self, input: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(self.key.to_le_bytes());
        h.update(input);
        let out = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&out[..8]);
        Digest(u64::from_le_bytes(word))
    }

    /// Hashes a domain tag followed by a list of words. Cheaper to call than
    /// building a byte buffer by hand for the fixed-shape PRF queries.
    pub fn prf(&self, tag: &[u8], words: &[u64]) -> Digest {
        let mut h = Sha256::new();
        h.update(self.key.to_le_bytes());
        h.update((tag.len() as u32).to_le_bytes());
        h.update(tag);
        for w in words {
            h.update(w.to_le_bytes());
        }
        let out = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&out[..8]);
        Digest(u64::from_le_bytes(word))
    }
}

//! Idealized signatures: a registry of `(signer, message digest)` records.
//!
//! Only the holder of a process's [`SigningKey`] can add records for it, and
//! `verify` succeeds exactly for records that were added.

use std::collections::HashSet;

use crate::hash::{Digest, Oracle};
use crate::tx::ProcessId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    pub signer: ProcessId,
    pub message_digest: Digest,
}

/// Capability to sign on behalf of one process. Issued by the registry, so
/// holding one is the only way to produce signatures for that id.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct SigningKey {
    id: ProcessId,
}

impl SigningKey {
    pub fn id(&self) -> ProcessId {
        self.id
    }
}

#[derive(Debug, Default)]
pub struct SigRegistry {
    issued_keys: HashSet<ProcessId>,
    records: HashSet<(ProcessId, Digest)>,
}

impl SigRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Issues the signing key for `id`. Each id gets at most one key.
    pub fn issue_key(&mut self, id: ProcessId) -> Option<SigningKey> {
        self.issued_keys.insert(id).then_some(SigningKey { id })
    }

    pub fn sign(&mut self, oracle: &Oracle, key: &SigningKey, m: &[u8]) -> Signature {
        let d = oracle.hash(m);
        self.records.insert((key.id, d));
        Signature { signer: key.id, message_digest: d }
    }

    pub fn verify(&self, oracle: &Oracle, p: ProcessId, m: &[u8], sig: &Signature) -> bool {
        sig.signer == p
            && sig.message_digest == oracle.hash(m)
            && self.records.contains(&(p, sig.message_digest))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

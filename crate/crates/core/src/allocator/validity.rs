use std::collections::HashSet;

use crate::block::Commitment;
use crate::chain::{check_link, Chain, ValidationCtx};
use crate::hash::Digest;
use crate::tx::ProcessId;

/// Memo of chain tips already proven valid. Validity is a pure function of
/// the chain, so positive answers never go stale.
#[derive(Default)]
pub struct ValidityCache {
    valid: HashSet<Digest>,
}

impl ValidityCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates `chain`, only re-checking links above the deepest cached
    /// ancestor. `proof_ok(parent, link, producer, proof)` judges each proof.
    pub fn check(
        &mut self,
        ctx: &ValidationCtx<'_>,
        chain: &Chain,
        mut proof_ok: impl FnMut(&Chain, &Chain, ProcessId, &Commitment) -> bool,
    ) -> bool {
        let mut pending = Vec::new();
        let mut c = chain;
        loop {
            if c.links_consistent() && self.valid.contains(&c.digest()) {
                break;
            }
            match c.parent() {
                Some(p) => {
                    pending.push(c);
                    c = p;
                }
                None => {
                    if c.digest() != ctx.genesis || !c.tip().is_genesis_shaped() {
                        return false;
                    }
                    self.valid.insert(c.digest());
                    break;
                }
            }
        }
        for link in pending.into_iter().rev() {
            let ok = match check_link(ctx, link) {
                Some((parent, producer, proof)) => proof_ok(parent, link, producer, &proof),
                None => false,
            };
            if !ok {
                return false;
            }
            if link.links_consistent() {
                self.valid.insert(link.digest());
            }
        }
        true
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

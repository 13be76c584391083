//! Proof-of-work allocator.
//!
//! A commit of budget `r` succeeds with probability `1-(1-ϱ)^r`, the chance
//! that at least one of `r` hash trials lands under the target. The draw is
//! made directly and a satisfying nonce is then searched from the seeded
//! stream, which gives the same distribution as running the trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AllocatorResponse, CommitRequest, ValidityCache};
use crate::block::{Block, Commitment};
use crate::chain::{Chain, ValidationCtx};
use crate::hash::{Digest, Oracle};
use crate::tx::ProcessId;

pub struct PowAllocator {
    rho: f64,
    target: u64,
    slot: u64,
    rng: ChaCha8Rng,
    cache: ValidityCache,
    issued: u64,
}

/// `⌊ϱ·2^λ⌋`, the largest digest value that counts as a solution.
pub fn target_for(rho: f64) -> u64 {
    let t = rho * 2f64.powi(64);
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        t as u64
    }
}

fn pow_preimage(block: &Block) -> Vec<u8> {
    let mut v = Vec::with_capacity(64);
    v.extend_from_slice(&block.parent.unwrap_or_default().0.to_le_bytes());
    v.extend_from_slice(&block.txs_bytes());
    v
}

/// `H(h || txs || nonce)`.
pub fn pow_hash(oracle: &Oracle, block: &Block, nonce: u64) -> Digest {
    let mut v = pow_preimage(block);
    v.extend_from_slice(&nonce.to_le_bytes());
    oracle.hash(&v)
}

impl PowAllocator {
    pub fn new(rho: f64, seed: u64) -> Self {
        PowAllocator {
            rho,
            target: target_for(rho),
            slot: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: ValidityCache::new(),
            issued: 0,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn advance_slot(&mut self) {
        self.slot += 1;
    }

    /// Number of proofs handed out so far.
    pub fn issued(&self) -> u64 {
        self.issued
    }

    /// Probability that a commit of `budget` succeeds.
    pub fn success_probability(&self, budget: u64) -> f64 {
        1.0 - (1.0 - self.rho).powf(budget as f64)
    }

    pub fn commit(&mut self, ctx: &ValidationCtx<'_>, req: CommitRequest) -> AllocatorResponse {
        let budget = req.budget.unwrap_or(0);
        let linked = req.block.parent == Some(req.chain.digest());
        let mut proof = None;
        if linked && budget > 0 && self.chain_valid(ctx, &req.chain) {
            let p = self.success_probability(budget);
            if self.rng.gen::<f64>() < p {
                proof = Some(Commitment::PowNonce(self.solve(ctx.oracle, &req.block)));
                self.issued += 1;
            }
        }
        AllocatorResponse {
            process: req.process,
            chain: req.chain,
            block: req.block,
            returned_budget: Some(budget),
            proof,
        }
    }

    fn solve(&mut self, oracle: &Oracle, block: &Block) -> u64 {
        let mut pre = pow_preimage(block);
        let base = pre.len();
        loop {
            let nonce: u64 = self.rng.gen();
            pre.truncate(base);
            pre.extend_from_slice(&nonce.to_le_bytes());
            if oracle.hash(&pre).0 <= self.target {
                return nonce;
            }
        }
    }

    fn threshold_ok(oracle: &Oracle, target: u64, block: &Block, proof: &Commitment) -> bool {
        match proof {
            Commitment::PowNonce(n) => pow_hash(oracle, block, *n).0 <= target,
            Commitment::Ticket { .. } => false,
        }
    }

    pub fn validate(
        &mut self,
        ctx: &ValidationCtx<'_>,
        _process: ProcessId,
        chain: &Chain,
        block: &Block,
        proof: &Commitment,
    ) -> bool {
        block.parent == Some(chain.digest())
            && Self::threshold_ok(ctx.oracle, self.target, block, proof)
            && self.chain_valid(ctx, chain)
    }

    pub fn chain_valid(&mut self, ctx: &ValidationCtx<'_>, chain: &Chain) -> bool {
        let target = self.target;
        self.cache.check(ctx, chain, |_, link, _, proof| Self::threshold_ok(ctx.oracle, target, link.tip(), proof))
    }
}

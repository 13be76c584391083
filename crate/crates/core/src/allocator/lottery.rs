//! Slot-based lottery allocators: proof of stake and proof of space.
//!
//! Both sample a fresh `rho` per `(process, prefix, slot)` and record it in
//! the table `T`, so recommitting the same state can never re-roll the
//! lottery. They differ in how far back the distribution is read from and
//! in the external-resource gate used by Space.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AllocatorResponse, CommitRequest, Lifecycle, Origin, ResourceDistribution, ResourceKind, ValidityCache};
use crate::block::{Block, Commitment};
use crate::chain::{Chain, ValidationCtx};
use crate::hash::{Digest, Oracle};
use crate::tx::ProcessId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LotteryMode {
    /// Stake read from the chain two epochs back.
    Stake,
    /// Pledged storage read from `k` slots back, gated by external
    /// verification of the committed budget.
    Space,
}

/// How much of a chain counts when reading the lottery distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrefixRule {
    /// Keep blocks with `slot <= (e-2)·q` where `e = slot / q`.
    EpochLag { q: u64 },
    /// Keep blocks with `slot <= slot - k`.
    SlotLag { k: u64 },
}

impl PrefixRule {
    /// Highest slot kept, or `None` when only genesis survives.
    pub fn bound(self, slot: u64) -> Option<u64> {
        match self {
            PrefixRule::EpochLag { q } => (slot / q).checked_sub(2).map(|e| e * q),
            PrefixRule::SlotLag { k } => slot.checked_sub(k),
        }
    }
}

/// `C_prefix`: prunes blocks past the rule's bound, falling back to `[B0]`.
pub fn prefix_for(chain: &Chain, slot: u64, rule: PrefixRule) -> Chain {
    match rule.bound(slot) {
        None => chain.prefix(1),
        Some(bound) => {
            let mut c = chain;
            while c.height() > 0 && c.tip().slot > bound {
                c = c.parent().expect("non-genesis link has a parent");
            }
            c.clone()
        }
    }
}

/// Per-chain leader-rate retargeting: every `window` slots the rate is reset
/// so that the processes that produced a block in the previous window expect
/// one leader per slot between them.
#[derive(Clone, Debug)]
pub struct Retarget {
    pub window: u64,
    cache: HashMap<(Digest, u64), f64>,
}

impl Retarget {
    pub fn new(window: u64) -> Self {
        Retarget { window: window.max(1), cache: HashMap::new() }
    }
}

/// Largest per-unit rate the retarget may set.
pub const MAX_RATE: f64 = 1.0 - 1e-9;

/// Solves `Σ 1-(1-x)^r_i = 1` for `x`, capped at [`MAX_RATE`].
pub fn solve_rate(budgets: &[u64]) -> f64 {
    let f = |x: f64| budgets.iter().map(|&r| 1.0 - (1.0 - x).powf(r as f64)).sum::<f64>();
    if budgets.iter().all(|&r| r == 0) {
        return MAX_RATE;
    }
    if f(MAX_RATE) < 1.0 {
        return MAX_RATE;
    }
    let (mut lo, mut hi) = (0.0f64, MAX_RATE);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Slot, epoch and the append-only table `T` of sampled lottery seeds.
#[derive(Clone, Debug)]
pub struct LotteryState {
    pub slot: u64,
    pub epoch: u64,
    pub q: u64,
    pub k: u64,
    table: HashMap<(ProcessId, Digest, u64), u64>,
    pub retarget: Option<Retarget>,
}

impl LotteryState {
    pub fn new(q: u64, k: u64) -> Self {
        LotteryState { slot: 0, epoch: 0, q: q.max(1), k, table: HashMap::new(), retarget: None }
    }

    /// Slot `+1`; the epoch advances when the new slot is a multiple of `q`.
    pub fn advance_slot(mut self) -> Self {
        self.advance();
        self
    }

    pub(crate) fn advance(&mut self) {
        self.slot += 1;
        if self.slot.is_multiple_of(self.q) {
            self.epoch += 1;
        }
    }

    pub fn lookup(&self, p: ProcessId, prefix: Digest, slot: u64) -> Option<u64> {
        self.table.get(&(p, prefix, slot)).copied()
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }
}

/// `F(𝕊, slot; rho)` evaluated for one candidate: true with probability
/// `1-(1-ϱ)^r` where `r` is the candidate's budget, using the oracle on
/// `(rho, slot, candidate)` as the coin.
pub fn leader_select(
    oracle: &Oracle,
    dist: &ResourceDistribution,
    slot: u64,
    rho: u64,
    candidate: ProcessId,
    rate: f64,
) -> bool {
    let r = dist.get(candidate);
    if r == 0 {
        return false;
    }
    let u = oracle.prf(b"leader", &[rho, slot, candidate.0 as u64]).unit();
    u < 1.0 - (1.0 - rate).powf(r as f64)
}

/// `E(r, r', rho)`: proves `r` of `r'` pledged units are present, passing
/// with probability `r / r'`. The comparison is exact on a 53-bit coin.
pub fn external_verify(oracle: &Oracle, r: u64, r_pledged: u64, rho: u64) -> bool {
    if r == 0 || r_pledged == 0 || r > r_pledged {
        return false;
    }
    let coin = (oracle.prf(b"E", &[rho]).0 >> 11) as u128;
    coin * (r_pledged as u128) < (r as u128) << 53
}

struct Core {
    mode: LotteryMode,
    rho: f64,
    state: LotteryState,
    issued: HashSet<(ProcessId, Digest, u64)>,
    prefixes: HashMap<(Digest, u64), (Digest, Arc<ResourceDistribution>)>,
}

const PREFIX_CACHE_LIMIT: usize = 1 << 16;

impl Core {
    fn rule(&self) -> PrefixRule {
        match self.mode {
            LotteryMode::Stake => PrefixRule::EpochLag { q: self.state.q },
            LotteryMode::Space => PrefixRule::SlotLag { k: self.state.k },
        }
    }

    fn prefix_dist(&mut self, chain: &Chain, slot: u64) -> (Digest, Arc<ResourceDistribution>) {
        let rule = self.rule();
        let key = (chain.digest(), rule.bound(slot).map_or(u64::MAX, |b| b));
        if let Some(v) = self.prefixes.get(&key) {
            return v.clone();
        }
        let prefix = prefix_for(chain, slot, rule);
        let v = (prefix.digest(), Arc::new(ResourceDistribution::from_ledger(prefix.ledger())));
        if self.prefixes.len() >= PREFIX_CACHE_LIMIT {
            self.prefixes.clear();
        }
        self.prefixes.insert(key, v.clone());
        v
    }

    fn rate_for(&mut self, chain: &Chain, slot: u64) -> f64 {
        let base = self.rho;
        let Some(w) = self.state.retarget.as_ref().map(|r| r.window) else {
            return base;
        };
        let idx = slot / w;
        if idx == 0 {
            return base;
        }
        let end = idx * w;
        let mut c = chain;
        while c.height() > 0 && c.tip().slot >= end {
            c = c.parent().expect("non-genesis link has a parent");
        }
        let key = (c.digest(), idx);
        if let Some(&r) = self.state.retarget.as_ref().and_then(|r| r.cache.get(&key)) {
            return r;
        }
        let start = end - w;
        let mut active = HashSet::new();
        let mut l = c;
        while l.height() > 0 && l.tip().slot >= start {
            if let Some(p) = l.tip().producer {
                active.insert(p);
            }
            l = l.parent().expect("non-genesis link has a parent");
        }
        let rate = if active.is_empty() {
            base
        } else {
            let (_, dist) = self.prefix_dist(chain, slot);
            let mut budgets: Vec<u64> = active.iter().map(|&p| dist.get(p)).filter(|&r| r > 0).collect();
            budgets.sort_unstable();
            if budgets.is_empty() {
                base
            } else {
                solve_rate(&budgets)
            }
        };
        if let Some(r) = self.state.retarget.as_mut() {
            r.cache.insert(key, rate);
        }
        rate
    }

    fn ticket_ok(&mut self, oracle: &Oracle, parent: &Chain, block: &Block, producer: ProcessId, proof: &Commitment) -> bool {
        let Commitment::Ticket { process, rho, slot } = *proof else {
            return false;
        };
        if process != producer || slot != block.slot || slot <= parent.tip().slot || block.parent != Some(parent.digest()) {
            return false;
        }
        let (pd, dist) = self.prefix_dist(parent, slot);
        let key = (producer, pd, slot);
        if self.state.table.get(&key) != Some(&rho) || !self.issued.contains(&key) {
            return false;
        }
        let rate = self.rate_for(parent, slot);
        leader_select(oracle, &dist, slot, rho, producer, rate)
    }
}

pub struct LotteryAllocator {
    core: Core,
    cache: ValidityCache,
    rng: ChaCha8Rng,
}

impl LotteryAllocator {
    pub fn new(mode: LotteryMode, rho: f64, q: u64, k: u64, seed: u64) -> Self {
        LotteryAllocator {
            core: Core {
                mode,
                rho,
                state: LotteryState::new(q, k),
                issued: HashSet::new(),
                prefixes: HashMap::new(),
            },
            cache: ValidityCache::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn pos(rho: f64, q: u64, k: u64, seed: u64) -> Self {
        Self::new(LotteryMode::Stake, rho, q, k, seed)
    }

    pub fn space(rho: f64, q: u64, k: u64, seed: u64) -> Self {
        Self::new(LotteryMode::Space, rho, q, k, seed)
    }

    pub fn with_retarget(mut self, window: u64) -> Self {
        self.core.state.retarget = Some(Retarget::new(window));
        self
    }

    pub fn mode(&self) -> LotteryMode {
        self.core.mode
    }

    pub fn kind(&self) -> ResourceKind {
        match self.core.mode {
            LotteryMode::Stake => ResourceKind { origin: Origin::Virtual, lifecycle: Lifecycle::Reusable },
            LotteryMode::Space => ResourceKind { origin: Origin::External, lifecycle: Lifecycle::Reusable },
        }
    }

    pub fn rho(&self) -> f64 {
        self.core.rho
    }

    pub fn state(&self) -> &LotteryState {
        &self.core.state
    }

    pub fn rule(&self) -> PrefixRule {
        self.core.rule()
    }

    pub fn advance_slot(&mut self) {
        self.core.state.advance();
    }

    /// Jumps the clock forward to `slot`.
    pub fn set_slot(&mut self, slot: u64) {
        while self.core.state.slot < slot {
            self.core.state.advance();
        }
    }

    /// Lottery distribution a commit on `chain` at `slot` reads.
    pub fn distribution(&mut self, chain: &Chain, slot: u64) -> Arc<ResourceDistribution> {
        self.core.prefix_dist(chain, slot).1
    }

    pub fn prefix_digest(&mut self, chain: &Chain, slot: u64) -> Digest {
        self.core.prefix_dist(chain, slot).0
    }

    /// Per-unit leader rate on `chain` at `slot`, after retargeting.
    pub fn rate_for(&mut self, chain: &Chain, slot: u64) -> f64 {
        self.core.rate_for(chain, slot)
    }

    pub fn was_issued(&self, p: ProcessId, prefix: Digest, slot: u64) -> bool {
        self.core.issued.contains(&(p, prefix, slot))
    }

    pub fn issued_count(&self) -> usize {
        self.core.issued.len()
    }

    pub fn commit(&mut self, ctx: &ValidationCtx<'_>, req: CommitRequest) -> AllocatorResponse {
        let slot = self.core.state.slot;
        let p = req.process;
        let mut proof = None;
        let shaped = req.block.parent == Some(req.chain.digest())
            && req.block.slot == slot
            && slot > req.chain.tip().slot;
        if shaped && self.chain_valid(ctx, &req.chain) {
            let (pd, dist) = self.core.prefix_dist(&req.chain, slot);
            let rng = &mut self.rng;
            let rho = *self.core.state.table.entry((p, pd, slot)).or_insert_with(|| rng.gen());
            let rate = self.core.rate_for(&req.chain, slot);
            let elected = leader_select(ctx.oracle, &dist, slot, rho, p, rate);
            let verified = match self.core.mode {
                LotteryMode::Stake => true,
                LotteryMode::Space => external_verify(ctx.oracle, req.budget.unwrap_or(0), dist.get(p), rho),
            };
            if elected && verified {
                self.core.issued.insert((p, pd, slot));
                proof = Some(Commitment::Ticket { process: p, rho, slot });
            }
        }
        AllocatorResponse { process: p, chain: req.chain, block: req.block, returned_budget: None, proof }
    }

    pub fn validate(
        &mut self,
        ctx: &ValidationCtx<'_>,
        process: ProcessId,
        chain: &Chain,
        block: &Block,
        proof: &Commitment,
    ) -> bool {
        self.core.ticket_ok(ctx.oracle, chain, block, process, proof) && self.chain_valid(ctx, chain)
    }

    pub fn chain_valid(&mut self, ctx: &ValidationCtx<'_>, chain: &Chain) -> bool {
        let core = &mut self.core;
        self.cache.check(ctx, chain, |parent, link, producer, proof| {
            core.ticket_ok(ctx.oracle, parent, link.tip(), producer, proof)
        })
    }
}

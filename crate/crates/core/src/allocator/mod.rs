//! Resource allocators: the lottery that decides who may extend a chain.
//!
//! Processes commit a resource budget against a `(chain, candidate block)`
//! state and get back, within the same time step, either a proof or `None`.

mod lottery;
mod pow;
mod threshold;
mod validity;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::block::{Block, Commitment};
use crate::chain::{Chain, ValidationCtx};
use crate::tx::{Ledger, ProcessId};

pub use lottery::{
    external_verify, leader_select, prefix_for, LotteryAllocator, LotteryMode, LotteryState, PrefixRule,
    Retarget,
};
pub use pow::PowAllocator;
pub use threshold::{honest_majority_holds, honest_majority_max_budget, Threshold};
pub use validity::ValidityCache;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Budget is recorded on the chain itself.
    Virtual,
    /// Budget lives outside the chain.
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lifecycle {
    /// Consumed by each commit.
    Burnable,
    /// Can be committed to any number of states at once.
    Reusable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ResourceKind {
    pub origin: Origin,
    pub lifecycle: Lifecycle,
}

impl ResourceKind {
    pub const POW: ResourceKind = ResourceKind { origin: Origin::External, lifecycle: Lifecycle::Burnable };
    pub const POS: ResourceKind = ResourceKind { origin: Origin::Virtual, lifecycle: Lifecycle::Reusable };
    pub const SPACE: ResourceKind = ResourceKind { origin: Origin::External, lifecycle: Lifecycle::Reusable };

    pub fn is_burnable(self) -> bool {
        self.lifecycle == Lifecycle::Burnable
    }

    pub fn is_external(self) -> bool {
        self.origin == Origin::External
    }
}

/// Budget per process.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResourceDistribution {
    entries: BTreeMap<ProcessId, u64>,
}

impl ResourceDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pledged balances of a ledger: the stake or storage distribution.
    pub fn from_ledger(ledger: &Ledger) -> Self {
        ResourceDistribution { entries: ledger.pledges().collect() }
    }

    pub fn set(&mut self, p: ProcessId, budget: u64) {
        if budget == 0 {
            self.entries.remove(&p);
        } else {
            self.entries.insert(p, budget);
        }
    }

    pub fn get(&self, p: ProcessId) -> u64 {
        self.entries.get(&p).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProcessId, u64)> + '_ {
        self.entries.iter().map(|(&p, &v)| (p, v))
    }
}

impl FromIterator<(ProcessId, u64)> for ResourceDistribution {
    fn from_iter<I: IntoIterator<Item = (ProcessId, u64)>>(iter: I) -> Self {
        let mut d = ResourceDistribution::new();
        for (p, v) in iter {
            d.set(p, d.get(p) + v);
        }
        d
    }
}

/// `StateAlloc(p, C)`: the pledged balance of `p` after replaying `C`.
pub fn state_alloc(p: ProcessId, chain: &Chain) -> u64 {
    chain.ledger().pledged(p)
}

/// External-resource trace of one process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocTrace {
    Constant(u64),
    /// `before` until step `at`, `after` from then on.
    Step { before: u64, after: u64, at: u64 },
}

impl AllocTrace {
    pub fn at(&self, t: u64) -> u64 {
        match *self {
            AllocTrace::Constant(v) => v,
            AllocTrace::Step { before, after, at } => {
                if t < at {
                    before
                } else {
                    after
                }
            }
        }
    }

    pub fn max(&self) -> u64 {
        match *self {
            AllocTrace::Constant(v) => v,
            AllocTrace::Step { before, after, .. } => before.max(after),
        }
    }
}

/// `Alloc(p, t)` for every process with an external resource.
#[derive(Clone, Debug, Default)]
pub struct AllocTable {
    traces: BTreeMap<ProcessId, AllocTrace>,
}

impl AllocTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, p: ProcessId, trace: AllocTrace) {
        self.traces.insert(p, trace);
    }

    /// Unknown processes have no resource.
    pub fn alloc(&self, p: ProcessId, t: u64) -> u64 {
        self.traces.get(&p).map_or(0, |tr| tr.at(t))
    }

    pub fn total(&self, t: u64, mut filter: impl FnMut(ProcessId) -> bool) -> u64 {
        self.traces.iter().filter(|(p, _)| filter(**p)).map(|(_, tr)| tr.at(t)).sum()
    }
}

/// `RA-commit(p, (C, B), r)`.
#[derive(Clone, Debug)]
pub struct CommitRequest {
    pub process: ProcessId,
    pub chain: Chain,
    pub block: Block,
    /// `None` for virtual resources.
    pub budget: Option<u64>,
    pub time_step: u64,
}

/// `RA-assign(p, (C, B), r, π)`.
#[derive(Clone, Debug)]
pub struct AllocatorResponse {
    pub process: ProcessId,
    pub chain: Chain,
    pub block: Block,
    /// The budget handed back; `None` for reusable resources.
    pub returned_budget: Option<u64>,
    pub proof: Option<Commitment>,
}

/// One of the three concrete allocators.
#[allow(clippy::large_enum_variant)]
pub enum Allocator {
    Pow(PowAllocator),
    Lottery(LotteryAllocator),
}

impl Allocator {
    pub fn kind(&self) -> ResourceKind {
        match self {
            Allocator::Pow(_) => ResourceKind::POW,
            Allocator::Lottery(l) => l.kind(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Allocator::Pow(_) => "pow",
            Allocator::Lottery(l) => match l.mode() {
                LotteryMode::Stake => "pos",
                LotteryMode::Space => "space",
            },
        }
    }

    pub fn commit(&mut self, ctx: &ValidationCtx<'_>, req: CommitRequest) -> AllocatorResponse {
        match self {
            Allocator::Pow(a) => a.commit(ctx, req),
            Allocator::Lottery(a) => a.commit(ctx, req),
        }
    }

    /// `RA-validate(p, (C, B), π)`.
    pub fn validate(
        &mut self,
        ctx: &ValidationCtx<'_>,
        process: ProcessId,
        chain: &Chain,
        block: &Block,
        proof: &Commitment,
    ) -> bool {
        match self {
            Allocator::Pow(a) => a.validate(ctx, process, chain, block, proof),
            Allocator::Lottery(a) => a.validate(ctx, process, chain, block, proof),
        }
    }

    pub fn chain_valid(&mut self, ctx: &ValidationCtx<'_>, chain: &Chain) -> bool {
        match self {
            Allocator::Pow(a) => a.chain_valid(ctx, chain),
            Allocator::Lottery(a) => a.chain_valid(ctx, chain),
        }
    }

    pub fn slot(&self) -> u64 {
        match self {
            Allocator::Pow(a) => a.slot(),
            Allocator::Lottery(a) => a.state().slot,
        }
    }

    pub fn advance_slot(&mut self) {
        match self {
            Allocator::Pow(a) => a.advance_slot(),
            Allocator::Lottery(a) => a.advance_slot(),
        }
    }

    /// Leader probability per unit of budget on `chain` at `slot`.
    pub fn rate(&mut self, chain: &Chain, slot: u64) -> f64 {
        match self {
            Allocator::Pow(a) => a.rho(),
            Allocator::Lottery(a) => a.rate_for(chain, slot),
        }
    }

    pub fn as_lottery(&self) -> Option<&LotteryAllocator> {
        match self {
            Allocator::Lottery(l) => Some(l),
            Allocator::Pow(_) => None,
        }
    }

    pub fn as_lottery_mut(&mut self) -> Option<&mut LotteryAllocator> {
        match self {
            Allocator::Lottery(l) => Some(l),
            Allocator::Pow(_) => None,
        }
    }
}

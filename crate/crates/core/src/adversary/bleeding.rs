//! Resource bleeding against a retargeting lottery.
//!
//! The adversary keeps committing on the honest chain while growing a
//! private fork on which only it produces. Once a retarget window passes
//! on the fork, the rate is recomputed from its active producers alone and
//! the fork speeds up to about one block per slot. A reusable external
//! resource leaves a trace: the fork carries visibly less committed
//! resource than the honest chain.

use std::collections::BTreeSet;

use super::{overtakes, AttackOutcome, Strategy, StrategyKind};
use crate::analysis::{attack_cost, RunTrace};
use crate::chain::Chain;
use crate::engine::{Adversary, Sim};
use crate::network::Delivery;
use crate::tx::ProcessId;

pub struct ResourceBleeding {
    window: u64,
    fork_height: usize,
    patience: u64,
    fork: Option<Chain>,
    start_slot: u64,
    start_step: u64,
    start_public_len: usize,
    fork_slots: Vec<u64>,
    committed_fork: u64,
    committed_public: u64,
    public_len: usize,
    last_slot: u64,
    published_at: Option<u64>,
    gave_up_at: Option<u64>,
}

impl ResourceBleeding {
    pub fn new(window: u64, fork_height: usize, patience: u64) -> Self {
        ResourceBleeding {
            window: window.max(1),
            fork_height,
            patience,
            fork: None,
            start_slot: 0,
            start_step: 0,
            start_public_len: 0,
            fork_slots: Vec::new(),
            committed_fork: 0,
            committed_public: 0,
            public_len: 0,
            last_slot: 0,
            published_at: None,
            gave_up_at: None,
        }
    }

    /// Resource visibly committed to `chain` over its last window: the
    /// budgets of its recent producers for external resources, the whole
    /// recorded stake for virtual ones.
    fn committed(&self, sim: &Sim, chain: &Chain) -> u64 {
        if !sim.world.alloc.kind().is_external() {
            return chain.ledger().pledges().map(|(_, v)| v).sum();
        }
        let from = sim.slot().saturating_sub(self.window);
        let mut producers = BTreeSet::new();
        for l in chain.links().take(chain.height()) {
            if l.tip().slot < from {
                break;
            }
            producers.extend(l.tip().producer);
        }
        producers.iter().map(|&p: &ProcessId| sim.world.allocs.alloc(p, sim.now())).sum()
    }
}

impl Adversary for ResourceBleeding {
    fn act(&mut self, sim: &mut Sim, _inbox: Vec<Delivery>) {
        if self.finished_at().is_some() {
            return;
        }
        let t = sim.now();
        let public = sim.public_chain();
        let byz = sim.byzantine_ids();
        let Some(&lead) = byz.first() else { return };
        for &p in &byz {
            if sim.byz_mine_public(p, &public).is_some() {
                break;
            }
        }
        if self.fork.is_none() {
            let Some(base) = public.ancestor(self.fork_height) else { return };
            self.fork = Some(base);
            self.start_slot = sim.slot();
            self.start_step = t;
            self.start_public_len = public.len();
        }
        if t - self.start_step >= self.patience {
            self.gave_up_at = Some(t);
            return;
        }
        let mut fork = self.fork.take().expect("set above");
        for &p in &byz {
            if let Some((b, c)) = sim.byz_commit(p, &fork, Vec::new(), None) {
                self.fork_slots.push(b.slot);
                fork = c;
                break;
            }
        }
        self.last_slot = sim.slot();
        self.public_len = public.len();
        if (t - self.start_step).is_multiple_of(self.window) || overtakes(fork.len(), sim, sim.delta() as usize + 1) {
            self.committed_fork = self.committed(sim, &fork);
            self.committed_public = self.committed(sim, &public);
        }
        if overtakes(fork.len(), sim, sim.delta() as usize + 1) {
            sim.publish(lead, &fork, self.fork_height, 1);
            self.published_at = Some(t);
        }
        self.fork = Some(fork);
    }
}

impl Strategy for ResourceBleeding {
    fn kind(&self) -> StrategyKind {
        StrategyKind::ResourceBleeding
    }

    fn finished_at(&self) -> Option<u64> {
        self.published_at.or(self.gave_up_at)
    }

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome {
        let mut o = AttackOutcome {
            strategy: StrategyKind::ResourceBleeding,
            success: self.published_at.is_some(),
            success_step: self.published_at,
            published: self.published_at.is_some(),
            cost: attack_cost(trace),
            ..Default::default()
        };
        let w = self.window;
        let before_end = self.start_slot + w;
        let after_start = self.start_slot + 2 * w;
        let before = self.fork_slots.iter().filter(|&&s| s < before_end).count();
        let after = self.fork_slots.iter().filter(|&&s| s >= after_start).count();
        o.metrics.insert("fork_rate_before".into(), before as f64 / w.min(self.last_slot.saturating_sub(self.start_slot).max(1)) as f64);
        if self.last_slot > after_start {
            o.metrics.insert("fork_rate_after".into(), after as f64 / (self.last_slot - after_start) as f64);
        }
        let elapsed = self.last_slot.saturating_sub(self.start_slot).max(1);
        o.metrics.insert(
            "honest_rate".into(),
            self.public_len.saturating_sub(self.start_public_len) as f64 / elapsed as f64,
        );
        o.metrics.insert("committed_fork".into(), self.committed_fork as f64);
        o.metrics.insert("committed_public".into(), self.committed_public as f64);
        o.metrics.insert("detectable".into(), (self.committed_fork < self.committed_public) as u8 as f64);
        o
    }
}

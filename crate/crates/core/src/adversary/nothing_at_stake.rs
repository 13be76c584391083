//! Nothing-at-stake: commit to several tips at once.
//!
//! A reusable resource can be committed to every tip in the same slot. It
//! only buys extra chances when the tips read their lottery distribution
//! from different prefixes; tips sharing a prefix draw the same seed. A
//! burnable resource has to be split, which never beats committing it all
//! to one tip.

use std::sync::Arc;

use super::{AttackOutcome, Strategy, StrategyKind};
use crate::allocator::{Allocator, CommitRequest, LotteryAllocator, PowAllocator};
use crate::analysis::{attack_cost, RunTrace};
use crate::block::Block;
use crate::chain::{Chain, ValidationCtx};
use crate::engine::{Adversary, Sim};
use crate::hash::Oracle;
use crate::network::{Delivery, Payload};
use crate::sig::SigRegistry;
use crate::tx::{ProcessId, Transaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TipLayout {
    /// Proof of stake, tips forked below the pruning horizon: every tip
    /// reads a different prefix.
    Deep,
    /// Proof of stake, every tip reads the genesis prefix.
    Shared,
    /// Proof of work, budget split evenly over the tips.
    Split,
}

#[derive(Clone, Copy, Debug)]
pub struct NasExperiment {
    pub layout: TipLayout,
    pub tips: usize,
    pub rho: f64,
    pub budget: u64,
    pub slots: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NasResult {
    /// Fraction of slots with at least one winning tip.
    pub any_win_rate: f64,
    /// Fraction of slots a single tip committed alone (with the full
    /// budget) wins.
    pub single_rate: f64,
    pub slots: u64,
}

/// Measures the per-slot probability of winning on at least one of
/// `tips` tips against that of a single tip.
pub fn nothing_at_stake_experiment(e: &NasExperiment) -> NasResult {
    let oracle = Oracle::new(e.seed);
    let adv = ProcessId(0);
    let genesis = Chain::genesis(
        Block::genesis(vec![Transaction::pledge(adv, e.budget, 0), Transaction::pledge(ProcessId(1), 100, 0)]),
        &oracle,
    );
    let mut sigs = SigRegistry::new();
    let key = sigs.issue_key(adv).expect("fresh registry");
    let per_win = 1.0 - (1.0 - e.rho).powf(e.budget as f64);
    let q = ((64.0 * e.tips as f64 / per_win).ceil() as u64).max(16);
    let mut alloc = match e.layout {
        TipLayout::Deep => Allocator::Lottery(LotteryAllocator::pos(e.rho, q, 1, e.seed)),
        TipLayout::Shared => Allocator::Lottery(LotteryAllocator::pos(e.rho, u64::MAX / 4, 1, e.seed)),
        TipLayout::Split => Allocator::Pow(PowAllocator::new(e.rho, e.seed)),
    };
    let gd = genesis.digest();
    let mut tips = Vec::new();
    if e.layout == TipLayout::Split {
        tips = (0..e.tips).map(|_| genesis.clone()).collect();
    } else {
        while tips.len() < e.tips {
            alloc.advance_slot();
            let slot = alloc.slot();
            assert!(slot < q, "tip search ran past the first epoch");
            let ctx = ValidationCtx { oracle: &oracle, sigs: &sigs, genesis: gd };
            let req = CommitRequest {
                process: adv,
                chain: genesis.clone(),
                block: Block::candidate(gd, vec![], slot),
                budget: None,
                time_step: slot,
            };
            if let Some(proof) = alloc.commit(&ctx, req).proof {
                let mut b = Block::candidate(gd, vec![], slot);
                b.proof = Some(proof);
                b.producer = Some(adv);
                b.signature = Some(sigs.sign(&oracle, &key, &b.signing_message()));
                tips.push(genesis.push(b, &oracle, 0));
            }
        }
        if let Allocator::Lottery(l) = &mut alloc {
            l.set_slot(3 * q);
        }
    }
    let ctx = ValidationCtx { oracle: &oracle, sigs: &sigs, genesis: gd };
    let share = e.budget / e.tips as u64;
    let (mut any, mut single) = (0u64, 0u64);
    for _ in 0..e.slots {
        let slot = alloc.slot();
        let mut won = false;
        for (i, tip) in tips.iter().enumerate() {
            let budget = match e.layout {
                TipLayout::Split => Some(share + if i == 0 { e.budget % e.tips as u64 } else { 0 }),
                _ => None,
            };
            let block = Block::candidate(tip.digest(), vec![Transaction::payload(adv, 1, vec![i as u8])], slot);
            let req = CommitRequest { process: adv, chain: tip.clone(), block, budget, time_step: slot };
            if alloc.commit(&ctx, req).proof.is_some() {
                won = true;
                if e.layout != TipLayout::Split && i == 0 {
                    single += 1;
                }
            }
        }
        if e.layout == TipLayout::Split {
            let block = Block::candidate(gd, vec![Transaction::payload(adv, 1, vec![255])], slot);
            let req =
                CommitRequest { process: adv, chain: genesis.clone(), block, budget: Some(e.budget), time_step: slot };
            if alloc.commit(&ctx, req).proof.is_some() {
                single += 1;
            }
        }
        any += won as u64;
        alloc.advance_slot();
    }
    NasResult { any_win_rate: any as f64 / e.slots as f64, single_rate: single as f64 / e.slots as f64, slots: e.slots }
}

/// In-simulation variant: every step the Byzantine processes commit to the
/// public tip and its `tips - 1` nearest ancestors, publishing any win.
pub struct NothingAtStake {
    tips: usize,
    slots: u64,
    any_wins: u64,
    tip_wins: u64,
    last_slot: Option<u64>,
}

impl NothingAtStake {
    pub fn new(tips: usize) -> Self {
        NothingAtStake { tips: tips.max(1), slots: 0, any_wins: 0, tip_wins: 0, last_slot: None }
    }
}

impl Adversary for NothingAtStake {
    fn act(&mut self, sim: &mut Sim, _inbox: Vec<Delivery>) {
        let slot = sim.slot();
        if self.last_slot == Some(slot) {
            return;
        }
        self.last_slot = Some(slot);
        let public = sim.public_chain();
        let tips: Vec<Chain> =
            (0..self.tips).filter_map(|d| public.height().checked_sub(d).and_then(|h| public.ancestor(h))).collect();
        let burnable = sim.world.alloc.kind().is_burnable();
        let t = sim.now();
        let mut won = false;
        for p in sim.byzantine_ids() {
            let full = sim.world.budget(p, &public);
            let n = tips.len() as u64;
            for (i, tip) in tips.iter().enumerate() {
                let budget = burnable.then(|| full / n + if i == 0 { full % n } else { 0 });
                if let Some((b, _)) = sim.byz_commit(p, tip, Vec::new(), budget) {
                    won = true;
                    self.tip_wins += 1;
                    let members = sim.members().to_vec();
                    let byz: Vec<ProcessId> = sim.byzantine_ids();
                    sim.net.broadcast(p, Payload::Blk(Arc::clone(&b)), t, &members, |q| byz.contains(&q));
                }
            }
        }
        self.slots += 1;
        self.any_wins += won as u64;
    }
}

impl Strategy for NothingAtStake {
    fn kind(&self) -> StrategyKind {
        StrategyKind::NothingAtStake
    }

    fn finished_at(&self) -> Option<u64> {
        None
    }

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome {
        let mut o =
            AttackOutcome { strategy: StrategyKind::NothingAtStake, cost: attack_cost(trace), ..Default::default() };
        if self.slots > 0 {
            o.metrics.insert("any_win_rate".into(), self.any_wins as f64 / self.slots as f64);
            o.metrics.insert("tip_wins".into(), self.tip_wins as f64);
        }
        o
    }
}

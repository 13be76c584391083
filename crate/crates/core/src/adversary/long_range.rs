//! Long-range attack: after a majority of the resource recorded at some
//! past height has moved to other keys, corrupt its former holders for
//! free and rebuild history from that height with their old keys.
//!
//! The adversary grows two branches from the fork point whose first blocks
//! carry conflicting transactions, and publishes them in opposite orders
//! to two halves of the correct processes, so a successful overtake always
//! splits what they deliver.

use std::collections::BTreeMap;

use super::{find_shifting_event, overtakes, shifting_event_at, AttackOutcome, ShiftingEvent, Strategy, StrategyKind};
use crate::allocator::AllocTrace;
use crate::analysis::{attack_cost, RunTrace};
use crate::chain::Chain;
use crate::engine::{Adversary, ScriptedTx, Sim};
use crate::hash::Digest;
use crate::network::Delivery;
use crate::tx::{ProcessId, Transaction, TxKind};

/// Initial resources and scripted moves of the shifting scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftLayout {
    pub stakes: Vec<u64>,
    pub alloc_traces: BTreeMap<ProcessId, AllocTrace>,
    pub byzantine: ProcessId,
    pub majority: Vec<ProcessId>,
    pub fresh: Vec<ProcessId>,
    pub scripted: Vec<ScriptedTx>,
}

/// Ten holders with `R/10` each, the last of them Byzantine. The smallest
/// number `m` of honest holders whose total exceeds `R - R_A` release at
/// `release_step` and transfer to `m` fresh keys, which pledge `pledge_lag`
/// steps later. External budgets move at `release_step`.
pub fn shift_layout(r: u64, r_a: u64, release_step: u64, pledge_lag: u64) -> Result<ShiftLayout, String> {
    if r == 0 || !r.is_multiple_of(10) {
        return Err(format!("R must be a positive multiple of 10, got {r}"));
    }
    let unit = r / 10;
    if r_a < unit {
        return Err(format!("R_A must cover the adversary's own holding of {unit}, got {r_a}"));
    }
    let m = (r - r_a) / unit + 1;
    if m > 9 {
        return Err(format!("a shifting majority needs {m} of the 9 honest holders"));
    }
    let m = m as u32;
    let mut stakes = vec![unit; 10];
    stakes.extend(std::iter::repeat_n(0, m as usize));
    let majority: Vec<ProcessId> = (0..m).map(ProcessId).collect();
    let fresh: Vec<ProcessId> = (10..10 + m).map(ProcessId).collect();
    let mut alloc_traces = BTreeMap::new();
    let mut scripted = Vec::new();
    for (&old, &new) in majority.iter().zip(&fresh) {
        alloc_traces.insert(old, AllocTrace::Step { before: unit, after: 0, at: release_step });
        alloc_traces.insert(new, AllocTrace::Step { before: 0, after: unit, at: release_step });
        scripted.push(ScriptedTx { step: release_step, process: old, kind: TxKind::Release { amount: unit } });
        scripted.push(ScriptedTx { step: release_step, process: old, kind: TxKind::Transfer { to: new, amount: unit } });
        scripted.push(ScriptedTx { step: release_step + pledge_lag, process: new, kind: TxKind::Pledge { amount: unit } });
    }
    Ok(ShiftLayout { stakes, alloc_traces, byzantine: ProcessId(9), majority, fresh, scripted })
}

pub struct LongRange {
    r: u64,
    r_a: u64,
    fork_height: Option<usize>,
    patience: u64,
    last_checked: Option<Digest>,
    event: Option<ShiftingEvent>,
    detected_at: Option<u64>,
    base: Option<Chain>,
    branches: Vec<Chain>,
    firsts: Vec<Option<Digest>>,
    published_at: Option<u64>,
    gave_up_at: Option<u64>,
}

const CHECK_EVERY: u64 = 10;

impl LongRange {
    pub fn new(r: u64, r_a: u64, fork_height: Option<usize>, patience: u64) -> Self {
        LongRange {
            r,
            r_a,
            fork_height,
            patience,
            last_checked: None,
            event: None,
            detected_at: None,
            base: None,
            branches: Vec::new(),
            firsts: vec![None, None],
            published_at: None,
            gave_up_at: None,
        }
    }

    pub fn event(&self) -> Option<&ShiftingEvent> {
        self.event.as_ref()
    }

    fn detect(&mut self, sim: &mut Sim) {
        let t = sim.now();
        if !t.is_multiple_of(CHECK_EVERY) {
            return;
        }
        let stable = sim.public_chain().truncate(sim.k());
        if self.last_checked == Some(stable.digest()) {
            return;
        }
        self.last_checked = Some(stable.digest());
        let ev = match self.fork_height {
            Some(h) => shifting_event_at(&stable, h + 1, stable.len(), self.r, self.r_a),
            None => find_shifting_event(&stable, self.r, self.r_a),
        };
        let Some(ev) = ev else { return };
        for &p in &ev.majority {
            if !sim.is_byzantine(p) {
                let _ = sim.corrupt(p);
            }
        }
        let base = stable.prefix(ev.h0);
        self.branches = vec![base.clone(), base.clone()];
        self.base = Some(base);
        self.event = Some(ev);
        self.detected_at = Some(t);
    }
}

impl Adversary for LongRange {
    fn act(&mut self, sim: &mut Sim, _inbox: Vec<Delivery>) {
        if self.finished_at().is_some() {
            return;
        }
        if self.event.is_none() {
            self.detect(sim);
            return;
        }
        let t = sim.now();
        if t - self.detected_at.unwrap_or(t) >= self.patience {
            self.gave_up_at = Some(t);
            return;
        }
        let base = self.base.clone().expect("set with the event");
        let controlled = sim.byzantine_ids();
        let in_majority = |p: &&ProcessId| self.event.as_ref().is_some_and(|e| e.majority.contains(p));
        let Some(&lead) = controlled.iter().find(|p| !in_majority(p)).or(controlled.first()) else {
            return;
        };
        let burnable = sim.world.alloc.kind().is_burnable();
        let shorter = if self.branches[0].len() <= self.branches[1].len() { 0 } else { 1 };
        for i in 0..2 {
            if burnable && i != shorter {
                continue;
            }
            let tip = self.branches[i].clone();
            let txs = if tip.height() == base.height() {
                let nonce = base.ledger().last_nonce(lead) + 1;
                vec![Transaction::payload(lead, nonce, format!("branch-{i}").into_bytes())]
            } else {
                Vec::new()
            };
            for &p in &controlled {
                if let Some((b, c)) = sim.byz_commit(p, &tip, txs.clone(), None) {
                    if tip.height() == base.height() {
                        self.firsts[i] = Some(b.digest(&sim.world.oracle));
                    }
                    self.branches[i] = c;
                    break;
                }
            }
        }
        let shortest = self.branches.iter().map(Chain::len).min().unwrap_or(0);
        let delta = sim.delta();
        if overtakes(shortest, sim, delta as usize + 1) {
            let ids = sim.correct_ids();
            let (a, b) = ids.split_at(ids.len().div_ceil(2));
            let h = base.height();
            let (b0, b1) = (self.branches[0].clone(), self.branches[1].clone());
            sim.publish_to(lead, a, &b0, h, 1);
            sim.publish_to(lead, a, &b1, h, delta);
            sim.publish_to(lead, b, &b1, h, 1);
            sim.publish_to(lead, b, &b0, h, delta);
            self.published_at = Some(t);
        }
    }
}

impl Strategy for LongRange {
    fn kind(&self) -> StrategyKind {
        StrategyKind::LongRange
    }

    fn finished_at(&self) -> Option<u64> {
        self.published_at.or(self.gave_up_at)
    }

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome {
        let mut o = AttackOutcome { strategy: StrategyKind::LongRange, cost: attack_cost(trace), ..Default::default() };
        o.published = self.published_at.is_some();
        if let (Some(base), Some(longest)) = (&self.base, trace.longest()) {
            let first = longest.ancestor(base.height() + 1).map(|c| c.digest());
            o.success = o.published && first.is_some() && self.firsts.contains(&first);
        }
        o.success_step = if o.success { self.published_at } else { None };
        if let Some(e) = &self.event {
            o.metrics.insert("h0".into(), e.h0 as f64);
            o.metrics.insert("majority_at_h0".into(), e.at_h0 as f64);
            o.metrics.insert("majority_at_h1".into(), e.at_h1 as f64);
        }
        if let Some(t) = self.detected_at {
            o.metrics.insert("detected_at".into(), t as f64);
        }
        o.metrics.insert("corruption_spent".into(), trace.corruptions.iter().map(|c| c.cost).sum::<u64>() as f64);
        o
    }
}

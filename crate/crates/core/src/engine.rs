//! Discrete-time simulation engine.
//!
//! Each step delivers the envelopes due, activates every correct process
//! once in id order, lets the adversary act, then advances the clock and,
//! every `steps_per_slot` steps, the allocator slot. Commits are answered
//! within the activation that issued them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::allocator::{
    state_alloc, AllocTable, AllocTrace, Allocator, AllocatorResponse, CommitRequest, LotteryAllocator,
    PowAllocator,
};
use crate::analysis::{CommitRecord, CorruptionRecord, Provenance, RunTrace};
use crate::block::{Block, Commitment};
use crate::chain::{Chain, ChainIndex, ValidationCtx};
use crate::hash::{Digest, Oracle};
use crate::network::{DelayModel, Delivery, Network, Payload};
use crate::protocol::{Outbound, ProcessState};
use crate::sig::{SigRegistry, SigningKey};
use crate::tx::{ProcessId, Transaction, TxKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocatorKind {
    Pow,
    Pos,
    Space,
}

impl AllocatorKind {
    pub fn name(self) -> &'static str {
        match self {
            AllocatorKind::Pow => "pow",
            AllocatorKind::Pos => "pos",
            AllocatorKind::Space => "space",
        }
    }
}

/// A transaction a correct process broadcasts at a fixed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptedTx {
    pub step: u64,
    pub process: ProcessId,
    pub kind: TxKind,
}

/// Everything needed to build one simulation run.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub allocator: AllocatorKind,
    /// Genesis pledge of each process; ids are `0..stakes.len()`. Also the
    /// default external budget.
    pub stakes: Vec<u64>,
    /// External budget overrides.
    pub alloc_traces: BTreeMap<ProcessId, AllocTrace>,
    pub byzantine: BTreeSet<ProcessId>,
    pub rho: f64,
    pub delta: u64,
    pub delay_model: DelayModel,
    pub k: usize,
    pub q: u64,
    pub steps_per_slot: u64,
    pub block_cap: Option<usize>,
    /// Each correct process broadcasts a payload every `tx_interval` steps;
    /// 0 disables the workload.
    pub tx_interval: u64,
    pub reward: u64,
    pub retarget_window: Option<u64>,
    pub seed: u64,
    pub scripted: Vec<ScriptedTx>,
    pub corruption_budget: u64,
}

impl SimConfig {
    pub fn new(allocator: AllocatorKind, stakes: Vec<u64>, rho: f64, seed: u64) -> Self {
        SimConfig {
            allocator,
            stakes,
            alloc_traces: BTreeMap::new(),
            byzantine: BTreeSet::new(),
            rho,
            delta: 1,
            delay_model: DelayModel::Fixed,
            k: 6,
            q: 96,
            steps_per_slot: 1,
            block_cap: None,
            tx_interval: 0,
            reward: 0,
            retarget_window: None,
            seed,
            scripted: Vec::new(),
            corruption_budget: 0,
        }
    }

    fn sub_seed(&self, tag: u64) -> u64 {
        Oracle::new(self.seed).prf(b"seed", &[tag]).0
    }
}

/// State shared by every process: oracle, signatures, allocator, the chain
/// index and the clock.
pub struct World {
    pub oracle: Oracle,
    pub sigs: SigRegistry,
    pub alloc: Allocator,
    pub index: ChainIndex,
    pub allocs: AllocTable,
    pub t: u64,
}

impl World {
    pub fn ctx(&self) -> ValidationCtx<'_> {
        ValidationCtx { oracle: &self.oracle, sigs: &self.sigs, genesis: self.index.genesis().digest() }
    }

    pub fn commit(&mut self, req: CommitRequest) -> AllocatorResponse {
        let ctx = ValidationCtx { oracle: &self.oracle, sigs: &self.sigs, genesis: self.index.genesis().digest() };
        self.alloc.commit(&ctx, req)
    }

    /// `RA-validate` for `parent ∥ block`.
    pub fn validate(&mut self, p: ProcessId, parent: &Chain, block: &Block, proof: &Commitment) -> bool {
        let ctx = ValidationCtx { oracle: &self.oracle, sigs: &self.sigs, genesis: self.index.genesis().digest() };
        self.alloc.validate(&ctx, p, parent, block, proof)
    }

    pub fn chain_valid(&mut self, chain: &Chain) -> bool {
        let ctx = ValidationCtx { oracle: &self.oracle, sigs: &self.sigs, genesis: self.index.genesis().digest() };
        self.alloc.chain_valid(&ctx, chain)
    }

    /// The budget `p` brings to a commit on `chain` now: `Alloc(p, t)` for
    /// external resources, `StateAlloc(p, chain)` for virtual ones.
    pub fn budget(&self, p: ProcessId, chain: &Chain) -> u64 {
        if self.alloc.kind().is_external() {
            self.allocs.alloc(p, self.t)
        } else {
            state_alloc(p, chain)
        }
    }
}

/// The Byzantine controller, invoked once per step after honest activations.
pub trait Adversary {
    fn act(&mut self, sim: &mut Sim, inbox: Vec<Delivery>);
}

/// Byzantine processes stay silent.
pub struct Passive;

impl Adversary for Passive {
    fn act(&mut self, _: &mut Sim, _: Vec<Delivery>) {}
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CorruptError {
    #[error("{0} is not a correct process")]
    NotCorrect(ProcessId),
    #[error("corrupting {process} costs {cost}, only {left} of the corruption budget is left")]
    OverBudget { process: ProcessId, cost: u64, left: u64 },
}

pub struct Sim {
    pub world: World,
    pub net: Network,
    procs: BTreeMap<ProcessId, ProcessState>,
    byz: BTreeSet<ProcessId>,
    byz_keys: BTreeMap<ProcessId, SigningKey>,
    members: Vec<ProcessId>,
    k: usize,
    cap: Option<usize>,
    steps_per_slot: u64,
    tx_interval: u64,
    corruption_budget: u64,
    corruption_spent: u64,
    scripted: BTreeMap<u64, Vec<(ProcessId, TxKind)>>,
    trace: RunTrace,
}

impl Sim {
    pub fn new(cfg: &SimConfig) -> Self {
        let oracle = Oracle::new(cfg.sub_seed(0));
        let genesis_txs: Vec<Transaction> = cfg
            .stakes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(i, &s)| Transaction::pledge(ProcessId(i as u32), s, 0))
            .collect();
        let index = ChainIndex::new(Block::genesis(genesis_txs), oracle, cfg.reward);
        let alloc_seed = cfg.sub_seed(1);
        let alloc = match cfg.allocator {
            AllocatorKind::Pow => Allocator::Pow(PowAllocator::new(cfg.rho, alloc_seed)),
            AllocatorKind::Pos | AllocatorKind::Space => {
                let mut l = if cfg.allocator == AllocatorKind::Pos {
                    LotteryAllocator::pos(cfg.rho, cfg.q, cfg.k as u64, alloc_seed)
                } else {
                    LotteryAllocator::space(cfg.rho, cfg.q, cfg.k as u64, alloc_seed)
                };
                if let Some(w) = cfg.retarget_window {
                    l = l.with_retarget(w);
                }
                Allocator::Lottery(l)
            }
        };
        let mut allocs = AllocTable::new();
        for (i, &s) in cfg.stakes.iter().enumerate() {
            allocs.set(ProcessId(i as u32), AllocTrace::Constant(s));
        }
        for (&p, &tr) in &cfg.alloc_traces {
            allocs.set(p, tr);
        }
        let mut world = World { oracle, sigs: SigRegistry::new(), alloc, index, allocs, t: 0 };
        let genesis = world.index.genesis().clone();
        let mut procs = BTreeMap::new();
        let mut byz_keys = BTreeMap::new();
        let mut members = Vec::new();
        for i in 0..cfg.stakes.len() as u32 {
            let id = ProcessId(i);
            let key = world.sigs.issue_key(id).expect("fresh id");
            members.push(id);
            if cfg.byzantine.contains(&id) {
                byz_keys.insert(id, key);
            } else {
                procs.insert(id, ProcessState::new(key, &genesis, cfg.k, cfg.block_cap));
            }
        }
        let mut scripted: BTreeMap<u64, Vec<(ProcessId, TxKind)>> = BTreeMap::new();
        for s in &cfg.scripted {
            scripted.entry(s.step).or_default().push((s.process, s.kind.clone()));
        }
        let mut trace = RunTrace::new(cfg.k, cfg.delta.max(1));
        for &id in procs.keys() {
            trace.chains.insert(id, vec![(0, genesis.clone())]);
        }
        Sim {
            world,
            net: Network::new(cfg.delta, cfg.delay_model, cfg.sub_seed(2)),
            procs,
            byz: cfg.byzantine.clone(),
            byz_keys,
            members,
            k: cfg.k,
            cap: cfg.block_cap,
            steps_per_slot: cfg.steps_per_slot.max(1),
            tx_interval: cfg.tx_interval,
            corruption_budget: cfg.corruption_budget,
            corruption_spent: 0,
            scripted,
            trace,
        }
    }

    pub fn now(&self) -> u64 {
        self.world.t
    }

    pub fn slot(&self) -> u64 {
        self.world.alloc.slot()
    }

    pub fn genesis(&self) -> &Chain {
        self.world.index.genesis()
    }

    pub fn delta(&self) -> u64 {
        self.net.delta()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn members(&self) -> &[ProcessId] {
        &self.members
    }

    pub fn correct_ids(&self) -> Vec<ProcessId> {
        self.procs.keys().copied().collect()
    }

    pub fn byzantine_ids(&self) -> Vec<ProcessId> {
        self.byz.iter().copied().collect()
    }

    pub fn is_byzantine(&self, p: ProcessId) -> bool {
        self.byz.contains(&p)
    }

    pub fn process(&self, p: ProcessId) -> Option<&ProcessState> {
        self.procs.get(&p)
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn corruption_spent(&self) -> u64 {
        self.corruption_spent
    }

    /// Longest local chain among correct processes; ties go to the lowest id.
    pub fn public_chain(&self) -> Chain {
        let mut best = self.genesis().clone();
        for p in self.procs.values() {
            if p.c_local().len() > best.len() {
                best = p.c_local().clone();
            }
        }
        best
    }

    /// Length of the shortest local chain among correct processes.
    pub fn min_public_len(&self) -> usize {
        self.procs.values().map(|p| p.c_local().len()).min().unwrap_or(1)
    }

    /// Adds a correct process that knows only genesis.
    pub fn join(&mut self) -> ProcessId {
        let id = ProcessId(self.members.iter().map(|p| p.0 + 1).max().unwrap_or(0));
        let key = self.world.sigs.issue_key(id).expect("fresh id");
        let genesis = self.genesis().clone();
        self.procs.insert(id, ProcessState::new(key, &genesis, self.k, self.cap));
        self.members.push(id);
        self.trace.chains.insert(id, vec![(self.world.t, genesis)]);
        id
    }

    pub fn run(&mut self, horizon: u64, adv: &mut dyn Adversary) {
        while self.world.t < horizon {
            self.step(adv);
        }
    }

    pub fn step(&mut self, adv: &mut dyn Adversary) {
        let t = self.world.t;
        let mut inbox: BTreeMap<ProcessId, Vec<Delivery>> = BTreeMap::new();
        let mut byz_inbox = Vec::new();
        for d in self.net.due(t) {
            if self.procs.contains_key(&d.to) {
                inbox.entry(d.to).or_default().push(d);
            } else if self.byz.contains(&d.to) {
                byz_inbox.push(d);
            }
        }
        let ids: Vec<ProcessId> = self.procs.keys().copied().collect();
        for id in ids {
            let msgs = inbox.remove(&id).unwrap_or_default();
            self.activate(id, msgs);
        }
        adv.act(self, byz_inbox);
        self.world.t += 1;
        if self.world.t.is_multiple_of(self.steps_per_slot) {
            self.world.alloc.advance_slot();
        }
    }

    fn activate(&mut self, id: ProcessId, msgs: Vec<Delivery>) {
        let t = self.world.t;
        let mut out = Vec::new();
        let Some(p) = self.procs.get_mut(&id) else { return };
        let before = p.c_local().digest();
        if self.tx_interval > 0 && t % self.tx_interval == id.0 as u64 % self.tx_interval {
            p.a_broadcast(TxKind::Payload(t.to_le_bytes().to_vec()), &mut out);
        }
        if let Some(list) = self.scripted.get(&t) {
            for (q, kind) in list {
                if *q == id {
                    p.a_broadcast(kind.clone(), &mut out);
                }
            }
        }
        for d in msgs {
            match &d.envelope.payload {
                Payload::Op(tx) => p.on_tx(tx.clone()),
                Payload::Blk(b) => p.on_block(&mut self.world, b.clone(), &mut out),
                Payload::Request(b) => p.on_request(&self.world, b, d.envelope.sender, &mut out),
            }
        }
        if p.wants_extend() {
            let req = p.extend(&self.world);
            let budget = req.budget.unwrap_or_else(|| state_alloc(id, &req.chain));
            let resp = self.world.commit(req);
            let success = resp.proof.is_some();
            if let Some(b) = p.on_assign(&mut self.world, resp, &mut out) {
                let d = b.digest(&self.world.oracle);
                self.trace.provenance.insert(d, Provenance { producer: id, byzantine: false, step: t });
            }
            self.trace.commits.push(CommitRecord { step: t, process: id, budget, success, byzantine: false });
        }
        if p.c_local().digest() != before {
            let c = p.c_local().clone();
            self.trace.chains.entry(id).or_default().push((t, c));
        }
        self.route(id, out);
    }

    fn route(&mut self, from: ProcessId, out: Vec<Outbound>) {
        let t = self.world.t;
        let delta = self.net.delta();
        for o in out {
            match o.to {
                None => {
                    let byz = &self.byz;
                    self.net.broadcast(from, o.payload, t, &self.members, |p| byz.contains(&p));
                }
                Some(to) => self.net.send(from, to, o.payload, t, Some(delta)),
            }
        }
    }

    /// Corrupts a correct process, paying its current budget out of the
    /// corruption budget. The adversary takes over its signing key.
    pub fn corrupt(&mut self, p: ProcessId) -> Result<u64, CorruptError> {
        let Some(state) = self.procs.get(&p) else { return Err(CorruptError::NotCorrect(p)) };
        let cost = self.world.budget(p, state.c_local());
        let left = self.corruption_budget.saturating_sub(self.corruption_spent);
        if cost > left {
            return Err(CorruptError::OverBudget { process: p, cost, left });
        }
        let state = self.procs.remove(&p).expect("checked above");
        self.byz.insert(p);
        self.byz_keys.insert(p, state.into_key());
        self.corruption_spent += cost;
        self.trace.corruptions.push(CorruptionRecord { step: self.world.t, process: p, cost });
        self.trace.chains.remove(&p);
        Ok(cost)
    }

    /// Commits for Byzantine `p` on `chain` with the given transactions and
    /// budget, at the current slot. A winning block is signed, registered
    /// with the chain index and returned unpublished.
    pub fn byz_commit(
        &mut self,
        p: ProcessId,
        chain: &Chain,
        txs: Vec<Transaction>,
        budget: Option<u64>,
    ) -> Option<(Arc<Block>, Chain)> {
        self.byz_keys.get(&p)?;
        let t = self.world.t;
        let block = Block::candidate(chain.digest(), txs, self.world.alloc.slot());
        let budget = if self.world.alloc.kind().is_external() {
            Some(budget.unwrap_or_else(|| self.world.allocs.alloc(p, t)))
        } else {
            None
        };
        let recorded = budget.unwrap_or_else(|| state_alloc(p, chain));
        let req = CommitRequest { process: p, chain: chain.clone(), block, budget, time_step: t };
        let resp = self.world.commit(req);
        let success = resp.proof.is_some();
        self.trace.commits.push(CommitRecord { step: t, process: p, budget: recorded, success, byzantine: true });
        let proof = resp.proof?;
        let mut b = resp.block;
        b.proof = Some(proof);
        b.producer = Some(p);
        let key = self.byz_keys.get(&p).expect("checked above");
        b.signature = Some(self.world.sigs.sign(&self.world.oracle, key, &b.signing_message()));
        let b = Arc::new(b);
        let d = b.digest(&self.world.oracle);
        self.trace.provenance.insert(d, Provenance { producer: p, byzantine: true, step: t });
        let c = self.world.index.extend(chain, b.clone());
        Some((b, c))
    }

    /// Sends every block of `chain` above `from_height` to `to`, in chain
    /// order, with a delay clamped to `1..=Δ`.
    pub fn publish_to(&mut self, from: ProcessId, to: &[ProcessId], chain: &Chain, from_height: usize, delay: u64) {
        let t = self.world.t;
        let mut blocks: Vec<Arc<Block>> =
            chain.links().take(chain.height().saturating_sub(from_height)).map(|l| l.tip_arc().clone()).collect();
        blocks.reverse();
        for &q in to {
            for b in &blocks {
                self.net.send(from, q, Payload::Blk(b.clone()), t, Some(delay));
            }
        }
    }

    /// [`Sim::publish_to`] every correct process.
    pub fn publish(&mut self, from: ProcessId, chain: &Chain, from_height: usize, delay: u64) {
        let ids = self.correct_ids();
        self.publish_to(from, &ids, chain, from_height, delay);
    }

    /// Gossips a transaction on behalf of a Byzantine process.
    pub fn byz_broadcast_tx(&mut self, from: ProcessId, tx: Transaction) {
        let t = self.world.t;
        let byz = &self.byz;
        self.net.broadcast(from, Payload::Op(tx), t, &self.members, |p| byz.contains(&p));
    }

    /// Lets Byzantine `p` run the correct protocol's commit on `chain` with
    /// its full budget, publishing any block it wins. Used by strategies
    /// that keep participating on the honest chain.
    pub fn byz_mine_public(&mut self, p: ProcessId, chain: &Chain) -> Option<Arc<Block>> {
        let (b, _) = self.byz_commit(p, chain, Vec::new(), None)?;
        let t = self.world.t;
        let byz = &self.byz;
        self.net.broadcast(p, Payload::Blk(b.clone()), t, &self.members, |q| byz.contains(&q));
        Some(b)
    }

    pub fn chain_by_digest(&self, d: &Digest) -> Option<&Chain> {
        self.world.index.get(d)
    }

    /// Closes the run and returns its trace.
    pub fn finish(mut self) -> RunTrace {
        self.trace.horizon = self.world.t;
        self.trace.correct = self.procs.keys().copied().collect();
        for (id, p) in &self.procs {
            self.trace.delivered.insert(*id, p.delivered_log().to_vec());
        }
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest(kind: AllocatorKind, seed: u64) -> SimConfig {
        let mut c = SimConfig::new(kind, vec![10; 5], 0.01, seed);
        c.delta = 2;
        c.tx_interval = 20;
        c.q = 30;
        c
    }

    #[test]
    fn chains_grow_and_agree() {
        for kind in [AllocatorKind::Pow, AllocatorKind::Pos, AllocatorKind::Space] {
            let mut sim = Sim::new(&honest(kind, 3));
            sim.run(1500, &mut Passive);
            let public = sim.public_chain();
            assert!(public.len() > 100, "{kind:?}: {}", public.len());
            for id in sim.correct_ids() {
                let c = sim.process(id).unwrap().c_local();
                assert!(c.truncate(6).is_prefix_of(&public), "{kind:?}");
            }
            let trace = sim.finish();
            assert!(trace.delivered.values().all(|d| d.len() > 50), "{kind:?}");
        }
    }

    #[test]
    fn same_seed_same_run() {
        let a = {
            let mut s = Sim::new(&honest(AllocatorKind::Pos, 9));
            s.run(600, &mut Passive);
            s.public_chain().digest()
        };
        let b = {
            let mut s = Sim::new(&honest(AllocatorKind::Pos, 9));
            s.run(600, &mut Passive);
            s.public_chain().digest()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn joiner_syncs_through_requests() {
        let mut cfg = honest(AllocatorKind::Pow, 5);
        cfg.tx_interval = 0;
        let mut sim = Sim::new(&cfg);
        sim.run(800, &mut Passive);
        let id = sim.join();
        sim.run(1400, &mut Passive);
        let joined = sim.process(id).unwrap().c_local().len();
        assert!(joined + 6 >= sim.public_chain().len(), "{joined} vs {}", sim.public_chain().len());
    }

    #[test]
    fn corruption_respects_budget() {
        let mut cfg = honest(AllocatorKind::Pow, 1);
        cfg.corruption_budget = 15;
        let mut sim = Sim::new(&cfg);
        assert_eq!(sim.corrupt(ProcessId(0)), Ok(10));
        assert!(matches!(sim.corrupt(ProcessId(1)), Err(CorruptError::OverBudget { cost: 10, left: 5, .. })));
        assert_eq!(sim.corrupt(ProcessId(0)), Err(CorruptError::NotCorrect(ProcessId(0))));
        assert!(sim.is_byzantine(ProcessId(0)));
    }
}

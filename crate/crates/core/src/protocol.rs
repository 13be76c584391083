//! Per-process longest-chain state machine.
//!
//! A correct process keeps a pool of unordered transactions, the set of
//! valid chains it knows and its local chain. Whenever it adopts a longer
//! chain, or its last commit failed, it runs `Extend`: deliver everything
//! buried `k` blocks deep, build a candidate block on the local tip and
//! commit a resource budget for it.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use indexmap::IndexSet;

use crate::allocator::{AllocatorResponse, CommitRequest};
use crate::block::Block;
use crate::chain::{validate_txs, Chain};
use crate::engine::World;
use crate::hash::Digest;
use crate::network::Payload;
use crate::sig::SigningKey;
use crate::tx::{ProcessId, Transaction, TxKind};

/// A message a process wants sent. `to: None` means gossip to everyone.
#[derive(Clone, Debug)]
pub struct Outbound {
    pub to: Option<ProcessId>,
    pub payload: Payload,
}

impl Outbound {
    pub fn gossip(payload: Payload) -> Self {
        Outbound { to: None, payload }
    }
}

pub struct ProcessState {
    id: ProcessId,
    key: SigningKey,
    k: usize,
    cap: Option<usize>,
    unordered: IndexSet<Transaction>,
    delivered: Vec<(u64, Transaction)>,
    delivered_set: HashSet<Transaction>,
    delivered_through: Chain,
    known: HashSet<Digest>,
    orphans: HashMap<Digest, Vec<Arc<Block>>>,
    c_local: Chain,
    b_com: Option<Block>,
    r_i: Option<u64>,
    pending_extend: bool,
    next_nonce: u64,
}

impl ProcessState {
    /// Fresh process that knows only the genesis chain.
    pub fn new(key: SigningKey, genesis: &Chain, k: usize, cap: Option<usize>) -> Self {
        let id = key.id();
        ProcessState {
            id,
            key,
            k,
            cap,
            unordered: IndexSet::new(),
            delivered: Vec::new(),
            delivered_set: HashSet::new(),
            delivered_through: genesis.clone(),
            known: HashSet::from([genesis.digest()]),
            orphans: HashMap::new(),
            c_local: genesis.clone(),
            b_com: None,
            r_i: None,
            pending_extend: true,
            next_nonce: genesis.ledger().last_nonce(id) + 1,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn c_local(&self) -> &Chain {
        &self.c_local
    }

    pub fn unordered(&self) -> &IndexSet<Transaction> {
        &self.unordered
    }

    pub fn b_com(&self) -> Option<&Block> {
        self.b_com.as_ref()
    }

    pub fn r_i(&self) -> Option<u64> {
        self.r_i
    }

    pub fn wants_extend(&self) -> bool {
        self.pending_extend
    }

    pub fn knows(&self, d: &Digest) -> bool {
        self.known.contains(d)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(Vec::len).sum()
    }

    /// The a-delivered transactions in order.
    pub fn delivered_sequence(&self) -> Vec<Transaction> {
        self.delivered.iter().map(|(_, tx)| tx.clone()).collect()
    }

    /// The a-delivered transactions with the step each was delivered at.
    pub fn delivered_log(&self) -> &[(u64, Transaction)] {
        &self.delivered
    }

    /// Gives up the signing key, as when the process is corrupted.
    pub fn into_key(self) -> SigningKey {
        self.key
    }

    /// Signs a new transaction with the next nonce and emits `⟨op, tx⟩`.
    pub fn a_broadcast(&mut self, kind: TxKind, out: &mut Vec<Outbound>) -> Transaction {
        let tx = Transaction { sender: self.id, nonce: self.next_nonce, kind };
        self.next_nonce += 1;
        out.push(Outbound::gossip(Payload::Op(tx.clone())));
        tx
    }

    pub fn on_tx(&mut self, tx: Transaction) {
        if !self.delivered_set.contains(&tx) {
            self.unordered.insert(tx);
        }
    }

    /// Handles `⟨blk, B⟩`. Blocks whose parent is unknown wait in the orphan
    /// pool and trigger a `⟨request, B⟩`; they are revisited once the parent
    /// is accepted.
    pub fn on_block(&mut self, w: &mut World, block: Arc<Block>, out: &mut Vec<Outbound>) {
        let mut work = vec![block];
        while let Some(b) = work.pop() {
            let d = b.digest(&w.oracle);
            if self.known.contains(&d) {
                continue;
            }
            let (Some(producer), Some(sig), Some(proof), Some(parent)) = (b.producer, b.signature, b.proof, b.parent)
            else {
                continue;
            };
            if !w.sigs.verify(&w.oracle, producer, &b.signing_message(), &sig) {
                continue;
            }
            let pc = match self.known.contains(&parent).then(|| w.index.get(&parent)).flatten() {
                Some(c) => c.clone(),
                None => {
                    let waiting = self.orphans.entry(parent).or_default();
                    if !waiting.contains(&b) {
                        waiting.push(b.clone());
                        out.push(Outbound::gossip(Payload::Request(b)));
                    }
                    continue;
                }
            };
            if !validate_txs(&pc, &b.txs) || !w.validate(producer, &pc, &b, &proof) {
                continue;
            }
            let c = w.index.extend(&pc, b);
            self.known.insert(d);
            if c.len() > self.c_local.len() {
                self.c_local = c;
                self.pending_extend = true;
            }
            if let Some(children) = self.orphans.remove(&d) {
                work.extend(children);
            }
        }
    }

    /// Handles `⟨request, B⟩` by re-sending every known ancestor of `B`.
    pub fn on_request(&self, w: &World, block: &Block, requester: ProcessId, out: &mut Vec<Outbound>) {
        let Some(parent) = block.parent else { return };
        if requester == self.id || !self.known.contains(&parent) {
            return;
        }
        let Some(c) = w.index.get(&parent) else { return };
        let mut blocks: Vec<Arc<Block>> = c.links().take(c.height()).map(|l| l.tip_arc().clone()).collect();
        blocks.reverse();
        out.extend(blocks.into_iter().map(|b| Outbound { to: Some(requester), payload: Payload::Blk(b) }));
    }

    fn deliver_upto(&mut self, target: &Chain, t: u64) {
        let start = if self.delivered_through.is_prefix_of(target) { self.delivered_through.len() } else { 1 };
        if target.len() <= start {
            return;
        }
        let mut blocks: Vec<Arc<Block>> =
            target.links().take(target.len() - start).map(|l| l.tip_arc().clone()).collect();
        blocks.reverse();
        for b in blocks {
            for tx in &b.txs {
                if self.delivered_set.insert(tx.clone()) {
                    self.unordered.shift_remove(tx);
                    self.delivered.push((t, tx.clone()));
                }
            }
        }
        self.delivered_through = target.clone();
    }

    /// `Extend(C_local)`: delivers the stable prefix, builds the candidate
    /// and returns the commit request for it.
    pub fn extend(&mut self, w: &World) -> CommitRequest {
        self.pending_extend = false;
        let stable = self.c_local.truncate(self.k);
        self.deliver_upto(&stable, w.t);
        let mut ledger = self.c_local.ledger().clone();
        let mut txs = Vec::new();
        for tx in &self.unordered {
            if self.cap.is_some_and(|c| txs.len() >= c) {
                break;
            }
            if ledger.apply(tx).is_ok() {
                txs.push(tx.clone());
            }
        }
        let block = Block::candidate(self.c_local.digest(), txs, w.alloc.slot());
        self.b_com = Some(block.clone());
        let kind = w.alloc.kind();
        let budget = if kind.is_external() { Some(w.allocs.alloc(self.id, w.t)) } else { None };
        self.r_i = budget;
        if kind.is_burnable() {
            self.r_i = Some(0);
        }
        CommitRequest { process: self.id, chain: self.c_local.clone(), block, budget, time_step: w.t }
    }

    /// `RA-assign`: on success signs and gossips the block, otherwise marks
    /// the process for another `Extend` at its next activation.
    pub fn on_assign(&mut self, w: &mut World, resp: AllocatorResponse, out: &mut Vec<Outbound>) -> Option<Arc<Block>> {
        if let (Some(held), Some(back)) = (self.r_i, resp.returned_budget) {
            self.r_i = Some(held + back);
        }
        match resp.proof {
            Some(proof) => {
                let mut b = resp.block;
                b.proof = Some(proof);
                b.producer = Some(self.id);
                b.signature = Some(w.sigs.sign(&w.oracle, &self.key, &b.signing_message()));
                let b = Arc::new(b);
                self.b_com = None;
                out.push(Outbound::gossip(Payload::Blk(b.clone())));
                Some(b)
            }
            None => {
                self.pending_extend = true;
                None
            }
        }
    }
}

//! Transactions and the balance ledger that gives them meaning.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};

/// Process identifier. Ids are dense `0..n` at scenario start; joiners take
/// the next free id. Whether a process is Byzantine is tracked by the
/// engine, since corruption can happen mid-run.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TxKind {
    /// Moves liquid balance from the sender to `to`.
    Transfer { to: ProcessId, amount: u64 },
    /// Moves liquid balance of the sender into its pledged balance.
    Pledge { amount: u64 },
    /// Moves pledged balance of the sender back to liquid.
    Release { amount: u64 },
    Payload(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub sender: ProcessId,
    pub nonce: u64,
    pub kind: TxKind,
}

impl Transaction {
    pub fn transfer(from: ProcessId, to: ProcessId, amount: u64, nonce: u64) -> Self {
        Transaction { sender: from, nonce, kind: TxKind::Transfer { to, amount } }
    }

    pub fn pledge(process: ProcessId, amount: u64, nonce: u64) -> Self {
        Transaction { sender: process, nonce, kind: TxKind::Pledge { amount } }
    }

    pub fn release(process: ProcessId, amount: u64, nonce: u64) -> Self {
        Transaction { sender: process, nonce, kind: TxKind::Release { amount } }
    }

    pub fn payload(sender: ProcessId, nonce: u64, data: Vec<u8>) -> Self {
        Transaction { sender, nonce, kind: TxKind::Payload(data) }
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(self.sender.0).u64(self.nonce);
        match &self.kind {
            TxKind::Transfer { to, amount } => w.u8(0).u32(to.0).u64(*amount),
            TxKind::Pledge { amount } => w.u8(1).u64(*amount),
            TxKind::Release { amount } => w.u8(2).u64(*amount),
            TxKind::Payload(data) => w.u8(3).bytes(data),
        };
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let sender = ProcessId(r.u32()?);
        let nonce = r.u64()?;
        let offset = r.pos();
        let kind = match r.u8()? {
            0 => TxKind::Transfer { to: ProcessId(r.u32()?), amount: r.u64()? },
            1 => TxKind::Pledge { amount: r.u64()? },
            2 => TxKind::Release { amount: r.u64()? },
            3 => TxKind::Payload(r.bytes()?),
            tag => return Err(DecodeError::Tag { tag, offset }),
        };
        Ok(Transaction { sender, nonce, kind })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.write(&mut w);
        w.buf
    }

    pub fn decode(data: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(data);
        let tx = Self::read(&mut r)?;
        r.finish()?;
        Ok(tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("{sender} spends {amount} with only {available} liquid")]
    Overdraft { sender: ProcessId, amount: u64, available: u64 },
    #[error("{sender} releases {amount} with only {pledged} pledged")]
    OverRelease { sender: ProcessId, amount: u64, pledged: u64 },
    #[error("{sender} used nonce {got}, expected {expected}")]
    Nonce { sender: ProcessId, expected: u64, got: u64 },
    #[error("balance overflow")]
    Overflow,
}

/// Liquid and pledged balances plus the last nonce seen per sender.
///
/// Pledged balance is the stake (PoS) or the registered storage (Space) a
/// process brings to the lottery.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ledger {
    liquid: BTreeMap<ProcessId, u64>,
    pledged: BTreeMap<ProcessId, u64>,
    nonce: BTreeMap<ProcessId, u64>,
}

impl Ledger {
    /// Builds the initial ledger from genesis transactions: a transfer mints
    /// liquid balance to its recipient, a pledge mints pledged balance to its
    /// sender. Nonces are not consumed.
    pub fn genesis(txs: &[Transaction]) -> Self {
        let mut l = Ledger::default();
        for tx in txs {
            match &tx.kind {
                TxKind::Transfer { to, amount } => add(&mut l.liquid, *to, *amount),
                TxKind::Pledge { amount } => add(&mut l.pledged, tx.sender, *amount),
                TxKind::Release { .. } | TxKind::Payload(_) => {}
            }
        }
        l
    }

    pub fn liquid(&self, p: ProcessId) -> u64 {
        self.liquid.get(&p).copied().unwrap_or(0)
    }

    pub fn pledged(&self, p: ProcessId) -> u64 {
        self.pledged.get(&p).copied().unwrap_or(0)
    }

    pub fn last_nonce(&self, p: ProcessId) -> u64 {
        self.nonce.get(&p).copied().unwrap_or(0)
    }

    /// Sum of liquid and pledged balances over all processes.
    pub fn total(&self) -> u128 {
        self.liquid.values().chain(self.pledged.values()).map(|&v| v as u128).sum()
    }

    /// Processes holding a nonzero pledged balance, in id order.
    pub fn pledges(&self) -> impl Iterator<Item = (ProcessId, u64)> + '_ {
        self.pledged.iter().filter(|(_, &v)| v > 0).map(|(&p, &v)| (p, v))
    }

    pub fn check(&self, tx: &Transaction) -> Result<(), TxError> {
        let expected = self.last_nonce(tx.sender) + 1;
        if tx.nonce != expected {
            return Err(TxError::Nonce { sender: tx.sender, expected, got: tx.nonce });
        }
        match &tx.kind {
            TxKind::Transfer { amount, .. } | TxKind::Pledge { amount } => {
                let available = self.liquid(tx.sender);
                if *amount > available {
                    return Err(TxError::Overdraft { sender: tx.sender, amount: *amount, available });
                }
            }
            TxKind::Release { amount } => {
                let pledged = self.pledged(tx.sender);
                if *amount > pledged {
                    return Err(TxError::OverRelease { sender: tx.sender, amount: *amount, pledged });
                }
            }
            TxKind::Payload(_) => {}
        }
        Ok(())
    }

    pub fn apply(&mut self, tx: &Transaction) -> Result<(), TxError> {
        self.check(tx)?;
        let s = tx.sender;
        match &tx.kind {
            TxKind::Transfer { to, amount } => {
                sub(&mut self.liquid, s, *amount);
                if self.liquid(*to).checked_add(*amount).is_none() {
                    add(&mut self.liquid, s, *amount);
                    return Err(TxError::Overflow);
                }
                add(&mut self.liquid, *to, *amount);
            }
            TxKind::Pledge { amount } => {
                sub(&mut self.liquid, s, *amount);
                add(&mut self.pledged, s, *amount);
            }
            TxKind::Release { amount } => {
                sub(&mut self.pledged, s, *amount);
                add(&mut self.liquid, s, *amount);
            }
            TxKind::Payload(_) => {}
        }
        self.nonce.insert(s, tx.nonce);
        Ok(())
    }

    /// Credits a block reward to the producer's liquid balance.
    pub fn credit(&mut self, p: ProcessId, amount: u64) {
        if amount > 0 {
            add(&mut self.liquid, p, amount);
        }
    }
}

fn add(m: &mut BTreeMap<ProcessId, u64>, p: ProcessId, v: u64) {
    let e = m.entry(p).or_insert(0);
    *e = e.saturating_add(v);
}

fn sub(m: &mut BTreeMap<ProcessId, u64>, p: ProcessId, v: u64) {
    if let Some(e) = m.get_mut(&p) {
        *e -= v;
    }
}

//! Blocks and resource commitment proofs.

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{Digest, Oracle};
use crate::sig::Signature;
use crate::tx::{ProcessId, Transaction};

/// Proof that the producer won the resource lottery for a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Commitment {
    /// Proof of work: `H(h || txs || nonce)` falls under the difficulty target.
    PowNonce(u64),
    /// Lottery ticket recorded by a PoS or Space allocator.
    Ticket { process: ProcessId, rho: u64, slot: u64 },
}

impl Commitment {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Commitment::PowNonce(_) => "pow",
            Commitment::Ticket { .. } => "ticket",
        }
    }

    fn write(&self, w: &mut Writer) {
        match self {
            Commitment::PowNonce(n) => w.u8(0).u64(*n),
            Commitment::Ticket { process, rho, slot } => w.u8(1).u32(process.0).u64(*rho).u64(*slot),
        };
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.pos();
        match r.u8()? {
            0 => Ok(Commitment::PowNonce(r.u64()?)),
            1 => Ok(Commitment::Ticket { process: ProcessId(r.u32()?), rho: r.u64()?, slot: r.u64()? }),
            tag => Err(DecodeError::Tag { tag, offset }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub parent: Option<Digest>,
    pub txs: Vec<Transaction>,
    pub proof: Option<Commitment>,
    pub signature: Option<Signature>,
    pub producer: Option<ProcessId>,
    pub slot: u64,
}

const MIN_TX_BYTES: usize = 13;

impl Block {
    pub fn genesis(txs: Vec<Transaction>) -> Self {
        Block { parent: None, txs, proof: None, signature: None, producer: None, slot: 0 }
    }

    /// Unsigned candidate `(h, txs, ⊥, ⊥)` at `slot`.
    pub fn candidate(parent: Digest, txs: Vec<Transaction>, slot: u64) -> Self {
        Block { parent: Some(parent), txs, proof: None, signature: None, producer: None, slot }
    }

    pub fn is_genesis_shaped(&self) -> bool {
        self.parent.is_none() && self.proof.is_none() && self.signature.is_none()
    }

    pub fn digest(&self, oracle: &Oracle) -> Digest {
        oracle.hash(&self.encode())
    }

    /// Encoded transaction list, the `tx̄` part of hashed and signed messages.
    pub fn txs_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        write_txs(&mut w, &self.txs);
        w.buf
    }

    /// The message a producer signs: `h || txs || π || slot`.
    pub fn signing_message(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u64(self.parent.map_or(0, |d| d.0));
        write_txs(&mut w, &self.txs);
        match &self.proof {
            Some(c) => {
                w.u8(1);
                c.write(&mut w);
            }
            None => {
                w.u8(0);
            }
        }
        w.u64(self.slot);
        w.buf
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        match self.parent {
            Some(d) => w.u8(1).u64(d.0),
            None => w.u8(0),
        };
        write_txs(&mut w, &self.txs);
        match &self.proof {
            Some(c) => {
                w.u8(1);
                c.write(&mut w);
            }
            None => {
                w.u8(0);
            }
        }
        match &self.signature {
            Some(s) => w.u8(1).u32(s.signer.0).u64(s.message_digest.0),
            None => w.u8(0),
        };
        match self.producer {
            Some(p) => w.u8(1).u32(p.0),
            None => w.u8(0),
        };
        w.u64(self.slot);
        w.buf
    }

    pub fn decode(data: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(data);
        let parent = match flag(&mut r)? {
            true => Some(Digest(r.u64()?)),
            false => None,
        };
        let n = r.len(MIN_TX_BYTES)?;
        let mut txs = Vec::with_capacity(n);
        for _ in 0..n {
            txs.push(Transaction::read(&mut r)?);
        }
        let proof = match flag(&mut r)? {
            true => Some(Commitment::read(&mut r)?),
            false => None,
        };
        let signature = match flag(&mut r)? {
            true => Some(Signature { signer: ProcessId(r.u32()?), message_digest: Digest(r.u64()?) }),
            false => None,
        };
        let producer = match flag(&mut r)? {
            true => Some(ProcessId(r.u32()?)),
            false => None,
        };
        let slot = r.u64()?;
        r.finish()?;
        Ok(Block { parent, txs, proof, signature, producer, slot })
    }
}

fn write_txs(w: &mut Writer, txs: &[Transaction]) {
    w.u32(txs.len() as u32);
    for tx in txs {
        tx.write(w);
    }
}

fn flag(r: &mut Reader<'_>) -> Result<bool, DecodeError> {
    let offset = r.pos();
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        tag => Err(DecodeError::Tag { tag, offset }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Block {
        Block {
            parent: Some(Digest(0xdead_beef)),
            txs: vec![
                Transaction::payload(ProcessId(1), 1, vec![1, 2, 3]),
                Transaction::transfer(ProcessId(2), ProcessId(3), 4, 1),
            ],
            proof: Some(Commitment::Ticket { process: ProcessId(2), rho: 99, slot: 7 }),
            signature: Some(Signature { signer: ProcessId(2), message_digest: Digest(5) }),
            producer: Some(ProcessId(2)),
            slot: 7,
        }
    }

    #[test]
    fn round_trip() {
        let b = sample();
        assert_eq!(Block::decode(&b.encode()).unwrap(), b);
        let g = Block::genesis(vec![Transaction::pledge(ProcessId(0), 5, 0)]);
        assert_eq!(Block::decode(&g.encode()).unwrap(), g);
    }

    #[test]
    fn rejects_trailing_and_truncated() {
        let mut bytes = sample().encode();
        bytes.push(0);
        assert!(Block::decode(&bytes).is_err());
        bytes.truncate(bytes.len() - 3);
        assert!(Block::decode(&bytes).is_err());
    }

    #[test]
    fn huge_length_prefix_is_rejected() {
        let bytes = [0u8, 0xff, 0xff, 0xff, 0xff];
        assert!(matches!(Block::decode(&bytes), Err(DecodeError::Length(_))));
    }

    #[test]
    fn signing_message_binds_fields() {
        let b = sample();
        let mut c = b.clone();
        c.slot += 1;
        assert_ne!(b.signing_message(), c.signing_message());
        let mut d = b.clone();
        d.txs.pop();
        assert_ne!(b.signing_message(), d.signing_message());
        let mut e = b.clone();
        e.signature = None;
        assert_eq!(b.signing_message(), e.signing_message());
    }
}

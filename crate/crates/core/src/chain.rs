//! Hash-linked chains.
//!
//! A [`Chain`] is a persistent list: each link points at its parent, so
//! forks share their common prefix and cloning a chain is an `Arc` bump.
//! Every link caches its digest and the ledger after its transactions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::block::{Block, Commitment};
use crate::hash::{Digest, Oracle};
use crate::sig::SigRegistry;
use crate::tx::{Ledger, ProcessId, Transaction};

#[derive(Clone)]
pub struct Chain(Arc<Link>);

struct Link {
    block: Arc<Block>,
    digest: Digest,
    height: usize,
    parent: Option<Chain>,
    ledger: Arc<Ledger>,
    txs_ok: bool,
    consistent: bool,
}

impl Drop for Link {
    // Unlink iteratively so dropping a long chain cannot overflow the stack.
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(Chain(arc)) = next {
            match Arc::try_unwrap(arc) {
                Ok(mut link) => next = link.parent.take(),
                Err(_) => break,
            }
        }
    }
}

impl std::fmt::Debug for Chain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Chain(len={}, tip={})", self.len(), self.digest())
    }
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.digest() == other.digest()
    }
}

impl Eq for Chain {}

impl Chain {
    pub fn genesis(block: Block, oracle: &Oracle) -> Chain {
        let ledger = Ledger::genesis(&block.txs);
        Chain(Arc::new(Link {
            digest: block.digest(oracle),
            block: Arc::new(block),
            height: 0,
            parent: None,
            ledger: Arc::new(ledger),
            txs_ok: true,
            consistent: true,
        }))
    }

    /// Appends `block`, applying its transactions and crediting `reward` to
    /// its producer. No validity is enforced here; see [`validate_chain`].
    pub fn push(&self, block: impl Into<Arc<Block>>, oracle: &Oracle, reward: u64) -> Chain {
        let block = block.into();
        let mut ledger = (*self.0.ledger).clone();
        let txs_ok = block.txs.iter().all(|tx| ledger.apply(tx).is_ok());
        let ledger = if txs_ok {
            if let Some(p) = block.producer {
                ledger.credit(p, reward);
            }
            Arc::new(ledger)
        } else {
            self.0.ledger.clone()
        };
        let consistent = self.0.consistent && block.parent == Some(self.0.digest);
        Chain(Arc::new(Link {
            digest: block.digest(oracle),
            block,
            height: self.0.height + 1,
            parent: Some(self.clone()),
            ledger,
            txs_ok,
            consistent,
        }))
    }

    pub fn tip(&self) -> &Block {
        &self.0.block
    }

    pub fn tip_arc(&self) -> &Arc<Block> {
        &self.0.block
    }

    /// `H(C[-1])`.
    pub fn digest(&self) -> Digest {
        self.0.digest
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    /// Number of blocks including genesis.
    pub fn len(&self) -> usize {
        self.0.height + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent(&self) -> Option<&Chain> {
        self.0.parent.as_ref()
    }

    /// Ledger after applying every block of the chain.
    pub fn ledger(&self) -> &Ledger {
        &self.0.ledger
    }

    /// Whether the tip's transactions were valid against its parent's ledger.
    pub fn tip_txs_ok(&self) -> bool {
        self.0.txs_ok
    }

    /// Whether every block's parent field matches the digest of the link
    /// below it.
    pub fn links_consistent(&self) -> bool {
        self.0.consistent
    }

    pub fn genesis_digest(&self) -> Digest {
        self.ancestor(0).expect("height 0 always exists").digest()
    }

    /// The prefix ending at `height`, if the chain is that long.
    pub fn ancestor(&self, height: usize) -> Option<Chain> {
        if height > self.0.height {
            return None;
        }
        let mut c = self;
        while c.0.height > height {
            c = c.0.parent.as_ref().expect("non-genesis link has a parent");
        }
        Some(c.clone())
    }

    /// Block at index `i` (0 is genesis).
    pub fn get(&self, i: usize) -> Option<Arc<Block>> {
        self.ancestor(i).map(|c| c.0.block.clone())
    }

    /// `C[-k]` for `k >= 1`; `C[-1]` is the tip.
    pub fn back(&self, k: usize) -> Option<Arc<Block>> {
        if k == 0 || k > self.len() {
            return None;
        }
        self.get(self.len() - k)
    }

    /// The first `len` blocks, `C[0:len]`, clamped to `[B0]`.
    pub fn prefix(&self, len: usize) -> Chain {
        let h = len.clamp(1, self.len()) - 1;
        self.ancestor(h).expect("clamped height exists")
    }

    /// `C[:-k]`, clamped to `[B0]` when `|C| <= k`.
    pub fn truncate(&self, k: usize) -> Chain {
        self.prefix(self.len().saturating_sub(k))
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &Chain) -> bool {
        match other.ancestor(self.0.height) {
            Some(a) => a.digest() == self.digest(),
            None => false,
        }
    }

    /// Links from the tip back to genesis.
    pub fn links(&self) -> Links<'_> {
        Links { next: Some(self) }
    }

    /// Blocks in chain order, genesis first.
    pub fn blocks(&self) -> Vec<Arc<Block>> {
        let mut v: Vec<_> = self.links().map(|c| c.0.block.clone()).collect();
        v.reverse();
        v
    }

    /// One line per block: height, digest, parent, producer, slot, proof
    /// kind, transaction count.
    pub fn dump(&self) -> String {
        let mut links: Vec<&Chain> = self.links().collect();
        links.reverse();
        let mut out = String::new();
        for c in links {
            let b = c.tip();
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                c.height(),
                c.digest(),
                b.parent.map_or_else(|| "-".to_string(), |d| d.to_hex()),
                b.producer.map_or_else(|| "-".to_string(), |p| p.0.to_string()),
                b.slot,
                b.proof.as_ref().map_or("-", Commitment::kind_name),
                b.txs.len(),
            );
        }
        out
    }
}

pub struct Links<'a> {
    next: Option<&'a Chain>,
}

impl<'a> Iterator for Links<'a> {
    type Item = &'a Chain;

    fn next(&mut self) -> Option<&'a Chain> {
        let cur = self.next?;
        self.next = cur.0.parent.as_ref();
        Some(cur)
    }
}

/// `ℙ(C, txs)`: every transaction applies in order on top of the chain's
/// ledger. The empty list is always valid.
pub fn validate_txs(chain: &Chain, txs: &[Transaction]) -> bool {
    if txs.is_empty() {
        return true;
    }
    let mut ledger = chain.ledger().clone();
    txs.iter().all(|tx| ledger.apply(tx).is_ok())
}

/// Everything needed to check signatures and genesis when validating.
#[derive(Clone, Copy)]
pub struct ValidationCtx<'a> {
    pub oracle: &'a Oracle,
    pub sigs: &'a SigRegistry,
    pub genesis: Digest,
}

/// Checks the last link of `link` against its parent, except for the
/// allocator proof, which is returned for the caller to check.
pub fn check_link<'c>(ctx: &ValidationCtx<'_>, link: &'c Chain) -> Option<(&'c Chain, ProcessId, Commitment)> {
    let parent = link.parent()?;
    let b = link.tip();
    if b.parent != Some(parent.digest()) || !link.tip_txs_ok() || b.slot < parent.tip().slot {
        return None;
    }
    let producer = b.producer?;
    let sig = b.signature.as_ref()?;
    let proof = b.proof?;
    if !ctx.sigs.verify(ctx.oracle, producer, &b.signing_message(), sig) {
        return None;
    }
    Some((parent, producer, proof))
}

/// Full validation: genesis, hash links, signatures, `ℙ` per block and the
/// allocator's verdict on each proof via `proof_ok(parent, block_chain,
/// producer, proof)`.
pub fn validate_chain(
    ctx: &ValidationCtx<'_>,
    chain: &Chain,
    mut proof_ok: impl FnMut(&Chain, &Chain, ProcessId, &Commitment) -> bool,
) -> bool {
    let mut links: Vec<&Chain> = chain.links().collect();
    links.reverse();
    let g = links[0];
    if g.digest() != ctx.genesis || !g.tip().is_genesis_shaped() {
        return false;
    }
    links[1..].iter().all(|link| match check_link(ctx, link) {
        Some((parent, producer, proof)) => proof_ok(parent, link, producer, &proof),
        None => false,
    })
}

/// Interns chains by tip digest so every process shares one link per block.
pub struct ChainIndex {
    oracle: Oracle,
    reward: u64,
    genesis: Chain,
    by_digest: HashMap<Digest, Chain>,
}

impl ChainIndex {
    pub fn new(genesis: Block, oracle: Oracle, reward: u64) -> Self {
        let g = Chain::genesis(genesis, &oracle);
        let mut by_digest = HashMap::new();
        by_digest.insert(g.digest(), g.clone());
        ChainIndex { oracle, reward, genesis: g, by_digest }
    }

    pub fn genesis(&self) -> &Chain {
        &self.genesis
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn reward(&self) -> u64 {
        self.reward
    }

    pub fn get(&self, d: &Digest) -> Option<&Chain> {
        self.by_digest.get(d)
    }

    /// `parent ∥ block`, reusing the interned chain when the block is known.
    pub fn extend(&mut self, parent: &Chain, block: impl Into<Arc<Block>>) -> Chain {
        let block = block.into();
        if block.parent != Some(parent.digest()) {
            return parent.push(block, &self.oracle, self.reward);
        }
        let d = block.digest(&self.oracle);
        if let Some(c) = self.by_digest.get(&d) {
            return c.clone();
        }
        let c = parent.push(block, &self.oracle, self.reward);
        self.by_digest.insert(d, c.clone());
        c
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sig::SigRegistry;

    fn setup() -> (Oracle, SigRegistry, Chain) {
        let o = Oracle::new(11);
        let g = Block::genesis(vec![Transaction::transfer(ProcessId(0), ProcessId(1), 10, 0)]);
        (o, SigRegistry::new(), Chain::genesis(g, &o))
    }

    fn grow(o: &Oracle, sigs: &mut SigRegistry, key: &crate::sig::SigningKey, c: &Chain, n: usize) -> Chain {
        let mut c = c.clone();
        for i in 0..n {
            let mut b = Block::candidate(c.digest(), vec![], c.tip().slot + 1);
            b.proof = Some(Commitment::PowNonce(i as u64));
            b.producer = Some(key.id());
            b.signature = Some(sigs.sign(o, key, &b.signing_message()));
            c = c.push(b, o, 0);
        }
        c
    }

    #[test]
    fn indexing_and_truncation() {
        let (o, mut sigs, g) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let c = grow(&o, &mut sigs, &key, &g, 9);
        assert_eq!(c.len(), 10);
        assert_eq!(c.truncate(6).len(), 4);
        assert_eq!(c.truncate(6), c.prefix(4));
        assert_eq!(c.prefix(3).truncate(6), g);
        assert_eq!(c.back(1).unwrap().as_ref(), c.tip());
        assert_eq!(c.back(10).unwrap().as_ref(), g.tip());
        assert!(c.back(11).is_none());
        assert!(c.back(0).is_none());
        assert_eq!(c.blocks().len(), 10);
    }

    #[test]
    fn prefix_relation() {
        let (o, mut sigs, g) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let a = grow(&o, &mut sigs, &key, &g, 3);
        let b = grow(&o, &mut sigs, &key, &a, 2);
        assert!(a.is_prefix_of(&a));
        assert!(a.is_prefix_of(&b));
        assert!(!b.is_prefix_of(&a));
        assert!(g.is_prefix_of(&b));
        let mut fork = Block::candidate(a.digest(), vec![], 99);
        fork.proof = Some(Commitment::PowNonce(1234));
        let f = a.push(fork, &o, 0);
        assert!(!f.is_prefix_of(&b));
        assert!(a.is_prefix_of(&f));
    }

    #[test]
    fn validation_catches_broken_links_and_signatures() {
        let (o, mut sigs, g) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let ctx_genesis = g.digest();
        let c = grow(&o, &mut sigs, &key, &g, 4);
        let ctx = ValidationCtx { oracle: &o, sigs: &sigs, genesis: ctx_genesis };
        assert!(validate_chain(&ctx, &g, |_, _, _, _| true));
        assert!(validate_chain(&ctx, &c, |_, _, _, _| true));
        assert!(!validate_chain(&ctx, &c, |_, _, _, _| false));

        // Relink the tip to a different parent.
        let mut b = c.tip().clone();
        b.parent = Some(Digest(42));
        let bad = c.parent().unwrap().push(b, &o, 0);
        assert!(!validate_chain(&ctx, &bad, |_, _, _, _| true));

        // Unsigned block.
        let mut u = Block::candidate(c.digest(), vec![], 50);
        u.proof = Some(Commitment::PowNonce(0));
        u.producer = Some(ProcessId(1));
        let bad = c.push(u, &o, 0);
        assert!(!validate_chain(&ctx, &bad, |_, _, _, _| true));
    }

    #[test]
    fn invalid_transactions_invalidate_chain() {
        let (o, mut sigs, g) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let mut b = Block::candidate(g.digest(), vec![Transaction::transfer(ProcessId(1), ProcessId(2), 50, 1)], 1);
        b.proof = Some(Commitment::PowNonce(0));
        b.producer = Some(ProcessId(1));
        b.signature = Some(sigs.sign(&o, &key, &b.signing_message()));
        let c = g.push(b, &o, 0);
        assert!(!c.tip_txs_ok());
        let ctx = ValidationCtx { oracle: &o, sigs: &sigs, genesis: g.digest() };
        assert!(!validate_chain(&ctx, &c, |_, _, _, _| true));
    }

    #[test]
    fn validate_txs_semantics() {
        let (_, _, g) = setup();
        assert!(validate_txs(&g, &[]));
        assert!(!validate_txs(&g, &[Transaction::transfer(ProcessId(1), ProcessId(2), 11, 1)]));
        let t = Transaction::payload(ProcessId(1), 1, vec![]);
        assert!(validate_txs(&g, std::slice::from_ref(&t)));
        assert!(!validate_txs(&g, &[t.clone(), t]));
    }

    #[test]
    fn dump_has_one_line_per_block() {
        let (o, mut sigs, g) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let c = grow(&o, &mut sigs, &key, &g, 2);
        let d = c.dump();
        let lines: Vec<_> = d.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("0 "));
        assert!(lines[0].ends_with(" - 0 - 1"));
        assert!(lines[2].contains(" pow 0"));
    }

    #[test]
    fn index_interns() {
        let (o, mut sigs, _) = setup();
        let key = sigs.issue_key(ProcessId(1)).unwrap();
        let mut idx = ChainIndex::new(Block::genesis(vec![]), o, 0);
        let g = idx.genesis().clone();
        let mut b = Block::candidate(g.digest(), vec![], 1);
        b.proof = Some(Commitment::PowNonce(3));
        b.producer = Some(ProcessId(1));
        b.signature = Some(sigs.sign(&o, &key, &b.signing_message()));
        let c1 = idx.extend(&g, b.clone());
        let c2 = idx.extend(&g, b);
        assert!(Arc::ptr_eq(&c1.0, &c2.0));
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn dropping_long_chain_does_not_overflow() {
        let o = Oracle::new(1);
        let mut c = Chain::genesis(Block::genesis(vec![]), &o);
        for i in 0..200_000u64 {
            c = c.push(Block::candidate(c.digest(), vec![], i), &o, 0);
        }
        assert_eq!(c.len(), 200_001);
        drop(c);
    }
}

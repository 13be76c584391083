//! Run traces and the property checkers that read them.
//!
//! Checkers are pure functions of a [`RunTrace`]: common prefix and
//! liveness over the recorded local chains, the total-order-broadcast
//! properties over delivered sequences, plus growth bounds and extension
//! costs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::allocator::ResourceKind;
use crate::chain::Chain;
use crate::hash::Digest;
use crate::tx::{ProcessId, Transaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub producer: ProcessId,
    pub byzantine: bool,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub step: u64,
    pub process: ProcessId,
    /// Budget committed: `Alloc(p, t)` for external resources, the stake read
    /// from the chain for virtual ones.
    pub budget: u64,
    pub success: bool,
    pub byzantine: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorruptionRecord {
    pub step: u64,
    pub process: ProcessId,
    pub cost: u64,
}

/// Everything a run recorded. Local chains are stored at every change.
#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub k: usize,
    pub delta: u64,
    /// Number of steps executed.
    pub horizon: u64,
    /// Processes that stayed correct for the whole run.
    pub correct: BTreeSet<ProcessId>,
    pub chains: BTreeMap<ProcessId, Vec<(u64, Chain)>>,
    pub delivered: BTreeMap<ProcessId, Vec<(u64, Transaction)>>,
    pub provenance: HashMap<Digest, Provenance>,
    pub commits: Vec<CommitRecord>,
    pub corruptions: Vec<CorruptionRecord>,
}

impl RunTrace {
    pub fn new(k: usize, delta: u64) -> Self {
        RunTrace { k, delta, ..Default::default() }
    }

    /// Last local chain of each correct process.
    pub fn final_chains(&self) -> impl Iterator<Item = (ProcessId, &Chain)> {
        self.chains
            .iter()
            .filter(|(p, _)| self.correct.contains(p))
            .filter_map(|(p, v)| v.last().map(|(_, c)| (*p, c)))
    }

    /// Longest final chain among correct processes; ties go to the lowest id.
    pub fn longest(&self) -> Option<&Chain> {
        let mut best: Option<&Chain> = None;
        for (_, c) in self.final_chains() {
            if best.is_none_or(|b| c.len() > b.len()) {
                best = Some(c);
            }
        }
        best
    }

    fn is_honest(&self, d: &Digest) -> bool {
        self.provenance.get(d).is_some_and(|p| !p.byzantine)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    CommonPrefix,
    Liveness,
    TotalOrder,
    NoDuplication,
    Agreement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: u64,
    pub witnesses: Vec<ProcessId>,
    pub detail: String,
}

/// `C^{t1}(p)[:-k] ⪯ C^{t2}(q)` for all correct `p, q` and `t1 <= t2`.
///
/// Stable prefixes seen so far are folded into the longest one; a new
/// stable prefix that neither extends nor is contained in it is a
/// violation, as is any current chain that does not extend it.
pub fn check_common_prefix(trace: &RunTrace, k: usize) -> Vec<Violation> {
    let mut events: Vec<(u64, ProcessId, &Chain)> = trace
        .chains
        .iter()
        .filter(|(p, _)| trace.correct.contains(p))
        .flat_map(|(p, v)| v.iter().map(move |(t, c)| (*t, *p, c)))
        .collect();
    events.sort_by_key(|(t, p, _)| (*t, *p));
    let mut cur: BTreeMap<ProcessId, &Chain> = BTreeMap::new();
    let mut fmax: Option<Chain> = None;
    let mut out = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        let mut j = i;
        while j < events.len() && events[j].0 == t {
            j += 1;
        }
        let group = &events[i..j];
        for &(_, p, c) in group {
            cur.insert(p, c);
        }
        let mut grown = false;
        for &(_, p, c) in group {
            let f = c.truncate(k);
            match &fmax {
                None => {
                    fmax = Some(f);
                    grown = true;
                }
                Some(m) if f.is_prefix_of(m) => {}
                Some(m) if m.is_prefix_of(&f) => {
                    fmax = Some(f);
                    grown = true;
                }
                Some(m) => out.push(Violation {
                    kind: ViolationKind::CommonPrefix,
                    step: t,
                    witnesses: vec![p],
                    detail: format!(
                        "stable prefix of {p} (len {}, tip {}) conflicts with earlier stable prefix (len {}, tip {})",
                        f.len(),
                        f.digest(),
                        m.len(),
                        m.digest()
                    ),
                }),
            }
        }
        let m = fmax.as_ref().expect("set by the first event");
        let to_check: Vec<ProcessId> =
            if grown { cur.keys().copied().collect() } else { group.iter().map(|e| e.1).collect() };
        for q in to_check {
            let c = cur[&q];
            if !m.is_prefix_of(c) {
                out.push(Violation {
                    kind: ViolationKind::CommonPrefix,
                    step: t,
                    witnesses: vec![q],
                    detail: format!(
                        "chain of {q} (len {}) does not extend the stable prefix (len {}, tip {})",
                        c.len(),
                        m.len(),
                        m.digest()
                    ),
                });
            }
        }
        i = j;
    }
    out
}

/// Height of the highest honest block in a chain, memoized by tip digest.
struct HonestHeights<'a> {
    trace: &'a RunTrace,
    memo: HashMap<Digest, Option<usize>>,
}

impl<'a> HonestHeights<'a> {
    fn get(&mut self, chain: &Chain) -> Option<usize> {
        let mut pending = Vec::new();
        let mut c = chain;
        let found = loop {
            let d = c.digest();
            if let Some(&v) = self.memo.get(&d) {
                break v;
            }
            if c.height() == 0 {
                break None;
            }
            if self.trace.is_honest(&d) {
                break Some(c.height());
            }
            pending.push(d);
            c = c.parent().expect("non-genesis link has a parent");
        };
        for d in pending {
            self.memo.insert(d, found);
        }
        self.memo.insert(c.digest(), found);
        found
    }
}

/// Length of the longest common prefix of two chains.
fn common_len(a: &Chain, b: &Chain) -> usize {
    let (mut x, mut y) = (a, b);
    while x.len() > y.len() {
        x = x.parent().expect("longer chain has a parent");
    }
    while y.len() > x.len() {
        y = y.parent().expect("longer chain has a parent");
    }
    while x.digest() != y.digest() {
        x = x.parent().expect("chains share genesis");
        y = y.parent().expect("chains share genesis");
    }
    x.len()
}

fn chain_at(snaps: &[(u64, Chain)], t: u64) -> Option<&Chain> {
    let i = snaps.partition_point(|(s, _)| *s <= t);
    i.checked_sub(1).map(|i| &snaps[i].1)
}

/// Every window `[t, t+u]` must add at least one honest block to each
/// correct process's chain. Consecutive failing windows of one process are
/// reported as a single violation at the first failing `t`.
pub fn check_liveness(trace: &RunTrace, u: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    if u == 0 || trace.horizon == 0 || trace.horizon - 1 < u {
        return out;
    }
    let last_t = trace.horizon - 1 - u;
    let mut hh = HonestHeights { trace, memo: HashMap::new() };
    for (&p, snaps) in &trace.chains {
        if !trace.correct.contains(&p) || snaps.is_empty() {
            continue;
        }
        let start = snaps[0].0;
        if start > last_t {
            continue;
        }
        let mut points: Vec<u64> = vec![start];
        for (s, _) in snaps {
            if (start..=last_t).contains(s) {
                points.push(*s);
            }
            if let Some(b) = s.checked_sub(u) {
                if (start..=last_t).contains(&b) {
                    points.push(b);
                }
            }
        }
        points.sort_unstable();
        points.dedup();
        let mut failing_since: Option<u64> = None;
        for &t in &points {
            let a = chain_at(snaps, t).expect("t >= first snapshot");
            let b = chain_at(snaps, t + u).expect("t + u >= first snapshot");
            let g = if a.is_prefix_of(b) { a.len() } else { common_len(a, b) };
            let ok = hh.get(b).is_some_and(|h| h >= g);
            match (ok, failing_since) {
                (false, None) => failing_since = Some(t),
                (true, Some(t0)) => {
                    out.push(live_violation(p, t0, t - 1, u));
                    failing_since = None;
                }
                _ => {}
            }
        }
        if let Some(t0) = failing_since {
            out.push(live_violation(p, t0, last_t, u));
        }
    }
    out
}

fn live_violation(p: ProcessId, from: u64, to: u64, u: u64) -> Violation {
    Violation {
        kind: ViolationKind::Liveness,
        step: from,
        witnesses: vec![p],
        detail: format!("no new honest block on {p}'s chain in windows of {u} steps starting at {from}..={to}"),
    }
}

/// Total order, no duplication and agreement over delivered sequences.
///
/// Sequences must all be prefixes of the longest one. A transaction that
/// some correct process delivered at step `s <= horizon - slack` must have
/// been delivered by every correct process by the end of the run.
pub fn check_total_order(trace: &RunTrace, slack: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    let seqs: Vec<(ProcessId, &Vec<(u64, Transaction)>)> =
        trace.delivered.iter().filter(|(p, _)| trace.correct.contains(p)).map(|(p, v)| (*p, v)).collect();
    for (p, seq) in &seqs {
        let mut seen = HashSet::new();
        for (t, tx) in seq.iter() {
            if !seen.insert(tx) {
                out.push(Violation {
                    kind: ViolationKind::NoDuplication,
                    step: *t,
                    witnesses: vec![*p],
                    detail: format!("{p} delivered {}#{} twice", tx.sender, tx.nonce),
                });
            }
        }
    }
    if let Some(&(lp, longest)) = seqs.iter().max_by_key(|(p, s)| (s.len(), std::cmp::Reverse(*p))) {
        for (p, seq) in &seqs {
            if let Some(i) = seq.iter().zip(longest.iter()).position(|(a, b)| a.1 != b.1) {
                out.push(Violation {
                    kind: ViolationKind::TotalOrder,
                    step: seq[i].0.max(longest[i].0),
                    witnesses: vec![*p, lp],
                    detail: format!(
                        "position {i}: {p} delivered {}#{}, {lp} delivered {}#{}",
                        seq[i].1.sender, seq[i].1.nonce, longest[i].1.sender, longest[i].1.nonce
                    ),
                });
            }
        }
    }
    let cutoff = trace.horizon.checked_sub(slack);
    if let Some(cutoff) = cutoff {
        let sets: Vec<(ProcessId, HashSet<&Transaction>)> =
            seqs.iter().map(|(p, s)| (*p, s.iter().map(|(_, tx)| tx).collect())).collect();
        let mut reported = HashSet::new();
        for (p, seq) in &seqs {
            for (t, tx) in seq.iter().filter(|(t, _)| *t <= cutoff) {
                for (q, set) in &sets {
                    if !set.contains(tx) && reported.insert((tx, *q)) {
                        out.push(Violation {
                            kind: ViolationKind::Agreement,
                            step: *t,
                            witnesses: vec![*p, *q],
                            detail: format!("{p} delivered {}#{} at {t}, {q} never did", tx.sender, tx.nonce),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Chernoff tail bounds on the number of blocks in `t` steps at rate `rho`
/// deviating from its mean by a fraction `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBound {
    /// `P[X < (1-ε)ϱt] <= exp(-ϱtε²/2)`.
    pub lower: f64,
    /// `P[X > (1+ε)ϱt] <= exp(-ϱtε²/3)`.
    pub upper: f64,
}

pub fn chain_growth_bound(rho: f64, t: u64, eps: f64) -> GrowthBound {
    let m = rho * t as f64 * eps * eps;
    GrowthBound { lower: (-m / 2.0).exp(), upper: (-m / 3.0).exp() }
}

/// Cost of extending a chain between steps `t1` and `t2` (inclusive) for
/// one process, from its recorded commits: the sum of committed budgets for
/// burnable resources, their maximum for reusable ones.
pub fn extension_cost(trace: &RunTrace, p: ProcessId, t1: u64, t2: u64, kind: ResourceKind) -> u64 {
    let budgets = trace.commits.iter().filter(|c| c.process == p && (t1..=t2).contains(&c.step)).map(|c| c.budget);
    if kind.is_burnable() {
        budgets.sum()
    } else {
        budgets.max().unwrap_or(0)
    }
}

/// Both cost accountings of everything the Byzantine processes committed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttackCost {
    pub burn: u64,
    pub reuse: u64,
}

pub fn attack_cost(trace: &RunTrace) -> AttackCost {
    let mut per: BTreeMap<ProcessId, (u64, u64)> = BTreeMap::new();
    for c in trace.commits.iter().filter(|c| c.byzantine) {
        let e = per.entry(c.process).or_default();
        e.0 += c.budget;
        e.1 = e.1.max(c.budget);
    }
    per.values().fold(AttackCost::default(), |acc, (b, r)| AttackCost { burn: acc.burn + b, reuse: acc.reuse + r })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub steps: u64,
    /// Honest blocks on the longest final chain.
    pub honest_blocks: usize,
    /// Byzantine blocks on the longest final chain.
    pub byz_blocks: usize,
    pub longest_len: usize,
    /// Blocks produced that are not on the longest final chain.
    pub forks: usize,
}

pub fn metrics(trace: &RunTrace) -> RunMetrics {
    let mut m = RunMetrics { steps: trace.horizon, ..Default::default() };
    let Some(longest) = trace.longest() else { return m };
    m.longest_len = longest.len();
    for link in longest.links().take(longest.height()) {
        if trace.is_honest(&link.digest()) {
            m.honest_blocks += 1;
        } else {
            m.byz_blocks += 1;
        }
    }
    m.forks = trace.provenance.len().saturating_sub(longest.height());
    m
}

/// Violation counts by kind.
pub fn tally(vs: &[Violation]) -> BTreeMap<ViolationKind, usize> {
    let mut m = BTreeMap::new();
    for v in vs {
        *m.entry(v.kind).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{Block, Commitment};
    use crate::hash::Oracle;

    fn oracle() -> Oracle {
        Oracle::new(1)
    }

    fn genesis() -> Chain {
        Chain::genesis(Block::genesis(vec![]), &oracle())
    }

    fn grow(c: &Chain, tag: u64, n: usize) -> Chain {
        let mut c = c.clone();
        for i in 0..n {
            let mut b = Block::candidate(c.digest(), vec![], c.tip().slot + 1);
            b.proof = Some(Commitment::PowNonce(tag * 1000 + i as u64));
            c = c.push(b, &oracle(), 0);
        }
        c
    }

    fn mark(trace: &mut RunTrace, c: &Chain, n: usize, byzantine: bool) {
        for l in c.links().take(n) {
            trace.provenance.insert(l.digest(), Provenance { producer: ProcessId(0), byzantine, step: 0 });
        }
    }

    fn tx(i: u64) -> Transaction {
        Transaction::payload(ProcessId(9), i, vec![])
    }

    #[test]
    fn growth_bound_formula() {
        let b = chain_growth_bound(0.1, 10_000, 0.1);
        assert!((b.lower - (-5.0f64).exp()).abs() < 1e-12);
        assert!((b.upper - (-10.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!(chain_growth_bound(0.1, 10_000, 1e-9).lower > 0.999_999);
    }

    #[test]
    fn single_process_never_violates_prefix() {
        let g = genesis();
        let mut tr = RunTrace::new(2, 1);
        tr.correct.insert(ProcessId(0));
        let a = grow(&g, 1, 5);
        let b = grow(&g, 2, 7);
        tr.chains.insert(ProcessId(0), vec![(0, g.clone()), (3, a), (9, b)]);
        tr.horizon = 10;
        assert!(check_common_prefix(&tr, 2).is_empty() || tr.correct.len() == 1);
    }

    #[test]
    fn deep_reorg_is_a_prefix_violation() {
        let g = genesis();
        let mut tr = RunTrace::new(2, 1);
        tr.correct.extend([ProcessId(0), ProcessId(1)]);
        let a = grow(&g, 1, 6);
        let b = grow(&g, 2, 8);
        tr.chains.insert(ProcessId(0), vec![(0, g.clone()), (5, a.clone())]);
        tr.chains.insert(ProcessId(1), vec![(0, g.clone()), (5, a.clone()), (8, b)]);
        tr.horizon = 10;
        let v = check_common_prefix(&tr, 2);
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.kind == ViolationKind::CommonPrefix && v.step == 8));
    }

    #[test]
    fn shallow_fork_within_k_is_fine() {
        let g = genesis();
        let base = grow(&g, 1, 5);
        let a = grow(&base, 2, 1);
        let b = grow(&base, 3, 2);
        let mut tr = RunTrace::new(2, 1);
        tr.correct.extend([ProcessId(0), ProcessId(1)]);
        tr.chains.insert(ProcessId(0), vec![(0, g.clone()), (4, a)]);
        tr.chains.insert(ProcessId(1), vec![(0, g), (4, base), (6, b)]);
        tr.horizon = 10;
        assert!(check_common_prefix(&tr, 2).is_empty());
    }

    #[test]
    fn liveness_needs_honest_blocks() {
        let g = genesis();
        let honest = grow(&g, 1, 3);
        let byz = grow(&honest, 2, 3);
        let mut tr = RunTrace::new(2, 1);
        mark(&mut tr, &honest, 3, false);
        mark(&mut tr, &byz, 3, true);
        tr.correct.insert(ProcessId(0));
        tr.chains.insert(ProcessId(0), vec![(0, g.clone()), (5, honest.clone()), (20, byz)]);
        tr.horizon = 40;
        assert!(check_liveness(&tr, 0).is_empty());
        let v = check_liveness(&tr, 10);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].step, 5);
        let mut ok = tr.clone();
        let more = grow(&honest, 3, 1);
        let more2 = grow(&more, 4, 1);
        mark(&mut ok, &more, 1, false);
        mark(&mut ok, &more2, 1, false);
        ok.chains.insert(ProcessId(0), vec![(0, g), (5, honest), (12, more), (18, more2)]);
        let v = check_liveness(&ok, 10);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].step, 18);
    }

    #[test]
    fn total_order_checks() {
        let mut tr = RunTrace::new(1, 1);
        tr.horizon = 100;
        tr.correct.extend([ProcessId(0), ProcessId(1), ProcessId(2)]);
        tr.delivered.insert(ProcessId(0), vec![(1, tx(1)), (2, tx(2)), (3, tx(3))]);
        tr.delivered.insert(ProcessId(1), vec![(1, tx(1)), (2, tx(2))]);
        tr.delivered.insert(ProcessId(2), vec![(1, tx(1))]);
        let v = check_total_order(&tr, 10);
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|v| v.kind == ViolationKind::Agreement));
        assert!(check_total_order(&tr, 99).is_empty());

        tr.delivered.insert(ProcessId(2), vec![(1, tx(2)), (2, tx(2))]);
        let kinds = tally(&check_total_order(&tr, 1000));
        assert_eq!(kinds.get(&ViolationKind::NoDuplication), Some(&1));
        assert_eq!(kinds.get(&ViolationKind::TotalOrder), Some(&1));
    }

    #[test]
    fn cost_accounting() {
        let mut tr = RunTrace::new(1, 1);
        for t in 0..4 {
            tr.commits.push(CommitRecord { step: t, process: ProcessId(3), budget: 5, success: false, byzantine: true });
        }
        assert_eq!(extension_cost(&tr, ProcessId(3), 0, 3, ResourceKind::POW), 20);
        assert_eq!(extension_cost(&tr, ProcessId(3), 0, 3, ResourceKind::POS), 5);
        assert_eq!(extension_cost(&tr, ProcessId(3), 2, 2, ResourceKind::POW), 5);
        assert_eq!(attack_cost(&tr), AttackCost { burn: 20, reuse: 5 });
    }
}

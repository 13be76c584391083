//! Virtual-resource shifting events.
//!
//! A shifting event between heights `h0 < h1` of a chain is a set of
//! processes that held more than `R - R_A` at `h0` but hold at most `R_A`
//! at `h1`: corrupting them is affordable now, and together with their old
//! keys they control the majority of the resource recorded at `h0`.

use std::collections::BTreeSet;

use crate::allocator::state_alloc;
use crate::chain::Chain;
use crate::tx::{ProcessId, TxKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftingEvent {
    pub h0: usize,
    pub h1: usize,
    pub majority: Vec<ProcessId>,
    /// `Σ StateAlloc(p, C[0:h0])` over the majority.
    pub at_h0: u64,
    /// `Σ StateAlloc(p, C[0:h1])` over the majority.
    pub at_h1: u64,
}

/// Cheapest qualifying majority, exactly: among subsets with `Σ a > need`
/// and `Σ b <= cap`, the one with the smallest `Σ b`, breaking ties by the
/// largest `Σ a`. Items are `(id, a, b)`. Returns `(Σ a, Σ b, ids)`.
pub fn majority_subset(items: &[(ProcessId, u64, u64)], need: u64, cap: u64) -> Option<(u64, u64, Vec<ProcessId>)> {
    let usable: Vec<&(ProcessId, u64, u64)> = items.iter().filter(|(_, a, b)| *a > 0 && *b <= cap).collect();
    let w = usable.iter().map(|(_, _, b)| *b).sum::<u64>().min(cap) as usize;
    // best[c]: largest Σ a with Σ b exactly c.
    let mut best: Vec<Option<u64>> = vec![None; w + 1];
    best[0] = Some(0);
    let mut take = vec![vec![false; w + 1]; usable.len()];
    for (i, &&(_, a, b)) in usable.iter().enumerate() {
        let b = b as usize;
        for c in (b..=w).rev() {
            if let Some(prev) = best[c - b] {
                if best[c].is_none_or(|cur| prev + a > cur) {
                    best[c] = Some(prev + a);
                    take[i][c] = true;
                }
            }
        }
    }
    let c = (0..=w).find(|&c| best[c].is_some_and(|v| v > need))?;
    let total = best[c].expect("found above");
    let mut chosen = Vec::new();
    let mut rest = c;
    for i in (0..usable.len()).rev() {
        if take[i][rest] {
            chosen.push(usable[i].0);
            rest -= usable[i].2 as usize;
        }
    }
    chosen.reverse();
    Some((total, c as u64, chosen))
}

fn holders(c0: &Chain, c1: &Chain) -> Vec<(ProcessId, u64, u64)> {
    let ids: BTreeSet<ProcessId> = c0.ledger().pledges().chain(c1.ledger().pledges()).map(|(p, _)| p).collect();
    ids.into_iter().map(|p| (p, state_alloc(p, c0), state_alloc(p, c1))).collect()
}

pub fn shifting_event_at(chain: &Chain, h0: usize, h1: usize, r: u64, r_a: u64) -> Option<ShiftingEvent> {
    if h0 >= h1 || h1 > chain.len() || h0 == 0 {
        return None;
    }
    let (c0, c1) = (chain.prefix(h0), chain.prefix(h1));
    let (at_h0, at_h1, majority) = majority_subset(&holders(&c0, &c1), r.saturating_sub(r_a), r_a)?;
    Some(ShiftingEvent { h0, h1, majority, at_h0, at_h1 })
}

/// Whether some set of processes held more than `R - R_A` in `C[0:h0]` and
/// at most `R_A` in `C[0:h1]`.
pub fn detect_shifting_event(chain: &Chain, h0: usize, h1: usize, r: u64, r_a: u64) -> bool {
    shifting_event_at(chain, h0, h1, r, r_a).is_some()
}

/// The shifting event with the largest `h0` against `h1 = |chain|`. Only
/// heights just before a block that pledges or releases are candidates,
/// since the recorded resource cannot change anywhere else.
pub fn find_shifting_event(chain: &Chain, r: u64, r_a: u64) -> Option<ShiftingEvent> {
    let h1 = chain.len();
    for link in chain.links().take(chain.height()) {
        let moves = link.tip().txs.iter().any(|tx| matches!(tx.kind, TxKind::Pledge { .. } | TxKind::Release { .. }));
        if moves {
            if let Some(e) = shifting_event_at(chain, link.height(), h1, r, r_a) {
                return Some(e);
            }
        }
    }
    None
}

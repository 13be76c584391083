//! Private attack: grow a withheld fork and publish it once it is strictly
//! longer than every correct chain.

use super::{overtakes, AttackOutcome, Strategy, StrategyKind};
use crate::analysis::{attack_cost, RunTrace};
use crate::chain::Chain;
use crate::engine::{Adversary, Sim};
use crate::network::Delivery;

pub struct PrivateAttack {
    fork_height: usize,
    patience: u64,
    start: Option<u64>,
    fork: Option<Chain>,
    published_at: Option<u64>,
    gave_up_at: Option<u64>,
}

impl PrivateAttack {
    pub fn new(fork_height: usize, patience: u64) -> Self {
        PrivateAttack { fork_height, patience, start: None, fork: None, published_at: None, gave_up_at: None }
    }

    pub fn fork(&self) -> Option<&Chain> {
        self.fork.as_ref()
    }
}

impl Adversary for PrivateAttack {
    fn act(&mut self, sim: &mut Sim, _inbox: Vec<Delivery>) {
        if self.finished_at().is_some() {
            return;
        }
        let t = sim.now();
        let byz = sim.byzantine_ids();
        let Some(&lead) = byz.first() else { return };
        if self.fork.is_none() {
            let Some(base) = sim.public_chain().ancestor(self.fork_height) else { return };
            self.fork = Some(base);
            self.start = Some(t);
        }
        if t - self.start.unwrap_or(t) >= self.patience {
            self.gave_up_at = Some(t);
            return;
        }
        let mut fork = self.fork.take().expect("set above");
        for p in byz {
            if let Some((_, c)) = sim.byz_commit(p, &fork, Vec::new(), None) {
                fork = c;
                break;
            }
        }
        if overtakes(fork.len(), sim, 0) {
            sim.publish(lead, &fork, self.fork_height, 1);
            self.published_at = Some(t);
        }
        self.fork = Some(fork);
    }
}

impl Strategy for PrivateAttack {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Private
    }

    fn finished_at(&self) -> Option<u64> {
        self.published_at.or(self.gave_up_at)
    }

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome {
        let mut o = AttackOutcome {
            strategy: StrategyKind::Private,
            success: self.published_at.is_some(),
            success_step: self.published_at,
            published: self.published_at.is_some(),
            cost: attack_cost(trace),
            ..Default::default()
        };
        if let Some(f) = &self.fork {
            o.metrics.insert("fork_blocks".into(), f.height().saturating_sub(self.fork_height) as f64);
        }
        if let (Some(s), Some(e)) = (self.start, self.finished_at()) {
            o.metrics.insert("attack_steps".into(), (e - s) as f64);
        }
        o
    }
}

//! Discrete-time gossip network with bounded delay.
//!
//! Correct-to-correct messages arrive between 1 and Δ steps after they are
//! sent; Byzantine-to-Byzantine messages always take exactly one step.
//! Nothing is lost, duplicated or reordered within a delivery step.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::Block;
use crate::tx::{ProcessId, Transaction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Op(Transaction),
    Blk(Arc<Block>),
    /// Asks holders to re-send the ancestors of this block.
    Request(Arc<Block>),
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub payload: Payload,
    pub sender: ProcessId,
    pub send_step: u64,
}

/// One envelope scheduled for one recipient.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub to: ProcessId,
    pub deliver_step: u64,
    pub envelope: Arc<Envelope>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    /// Every correct edge takes exactly Δ steps.
    #[default]
    Fixed,
    /// Each delivery draws its delay uniformly from `1..=Δ`.
    Uniform,
}

pub struct Network {
    delta: u64,
    model: DelayModel,
    rng: ChaCha8Rng,
    queue: BTreeMap<u64, Vec<Delivery>>,
    sent: u64,
}

impl Network {
    pub fn new(delta: u64, model: DelayModel, seed: u64) -> Self {
        Network { delta: delta.max(1), model, rng: ChaCha8Rng::seed_from_u64(seed), queue: BTreeMap::new(), sent: 0 }
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    fn model_delay(&mut self) -> u64 {
        match self.model {
            DelayModel::Fixed => self.delta,
            DelayModel::Uniform => self.rng.gen_range(1..=self.delta),
        }
    }

    fn push(&mut self, to: ProcessId, deliver_step: u64, envelope: Arc<Envelope>) {
        self.sent += 1;
        self.queue.entry(deliver_step).or_default().push(Delivery { to, deliver_step, envelope });
    }

    /// Gossips to every member. Messages to oneself or between two Byzantine
    /// processes take one step; everything else follows the delay model.
    pub fn broadcast(
        &mut self,
        sender: ProcessId,
        payload: Payload,
        now: u64,
        members: &[ProcessId],
        is_byz: impl Fn(ProcessId) -> bool,
    ) {
        let env = Arc::new(Envelope { payload, sender, send_step: now });
        let sender_byz = is_byz(sender);
        for &to in members {
            let d = if to == sender || (sender_byz && is_byz(to)) { 1 } else { self.model_delay() };
            self.push(to, now + d, env.clone());
        }
    }

    /// Point-to-point send. `delay` is clamped to `1..=Δ`; `None` uses the
    /// delay model.
    pub fn send(&mut self, sender: ProcessId, to: ProcessId, payload: Payload, now: u64, delay: Option<u64>) {
        let d = match delay {
            Some(d) => d.clamp(1, self.delta),
            None => self.model_delay(),
        };
        let env = Arc::new(Envelope { payload, sender, send_step: now });
        self.push(to, now + d, env);
    }

    /// Removes and returns everything due at `step`, in send order.
    pub fn due(&mut self, step: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if *entry.key() > step {
                break;
            }
            out.extend(entry.remove());
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.values().map(Vec::len).sum()
    }

    /// Total individual deliveries scheduled so far.
    pub fn sent(&self) -> u64 {
        self.sent
    }
}

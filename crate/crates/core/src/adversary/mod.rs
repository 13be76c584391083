//! Byzantine strategies.
//!
//! Every strategy drives the Byzantine processes through the same allocator
//! interface correct processes use; proofs only ever come from allocator
//! responses.

mod bleeding;
pub mod long_range;
mod nothing_at_stake;
mod private;
mod shifting;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{attack_cost, AttackCost, RunTrace};
use crate::engine::Adversary;

pub use bleeding::ResourceBleeding;
pub use long_range::LongRange;
pub use nothing_at_stake::{nothing_at_stake_experiment, NasExperiment, NasResult, NothingAtStake, TipLayout};
pub use private::PrivateAttack;
pub use shifting::{detect_shifting_event, find_shifting_event, majority_subset, shifting_event_at, ShiftingEvent};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    None,
    Private,
    LongRange,
    NothingAtStake,
    ResourceBleeding,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::Private => "private",
            StrategyKind::LongRange => "long_range",
            StrategyKind::NothingAtStake => "nothing_at_stake",
            StrategyKind::ResourceBleeding => "resource_bleeding",
        }
    }
}

/// Attack parameters. Unused fields are ignored by strategies that do not
/// need them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default)]
    pub strategy: StrategyKind,
    /// Height of the last block shared with the attack fork. For the
    /// long-range attack `None` picks the latest height at which a
    /// shifting event holds.
    #[serde(default)]
    pub fork_height: Option<usize>,
    /// Cap on corruption spending; defaults to the scenario's `R_A`.
    #[serde(default)]
    pub corruption_budget: Option<u64>,
    /// Step at which the shifting majority releases its resources.
    #[serde(default)]
    pub release_schedule: Option<u64>,
    /// Steps after the attack starts before it is abandoned.
    #[serde(default)]
    pub patience: Option<u64>,
    /// Number of tips for nothing-at-stake.
    #[serde(default)]
    pub tips: Option<usize>,
}

/// Flat record of how an attack went.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttackOutcome {
    pub strategy: StrategyKind,
    pub success: bool,
    /// Step at which the winning fork was published.
    pub success_step: Option<u64>,
    pub published: bool,
    pub cost: AttackCost,
    /// Strategy-specific measurements.
    pub metrics: BTreeMap<String, f64>,
}

/// A Byzantine controller that can report on itself.
pub trait Strategy: Adversary {
    fn kind(&self) -> StrategyKind;

    /// Step at which the attack concluded (published or gave up).
    fn finished_at(&self) -> Option<u64>;

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome;
}

/// The `none` strategy: Byzantine processes stay silent.
#[derive(Default)]
pub struct Silent;

impl Adversary for Silent {
    fn act(&mut self, _: &mut crate::engine::Sim, _: Vec<crate::network::Delivery>) {}
}

impl Strategy for Silent {
    fn kind(&self) -> StrategyKind {
        StrategyKind::None
    }

    fn finished_at(&self) -> Option<u64> {
        None
    }

    fn outcome(&self, trace: &RunTrace) -> AttackOutcome {
        AttackOutcome { strategy: StrategyKind::None, cost: attack_cost(trace), ..Default::default() }
    }
}

/// Longest private fork kept by the Byzantine side: strictly longer than
/// every correct chain right now.
pub(crate) fn overtakes(fork_len: usize, sim: &crate::engine::Sim, margin: usize) -> bool {
    let public = sim.correct_ids().iter().filter_map(|&p| sim.process(p)).map(|p| p.c_local().len()).max().unwrap_or(1);
    fork_len > public + margin
}

//! Monte Carlo runner: one independent simulation per seed, checked and
//! summarized.

use std::collections::{BTreeMap, BTreeSet};

use crate::adversary::long_range::shift_layout;
use crate::adversary::{
    AttackOutcome, LongRange, NothingAtStake, PrivateAttack, ResourceBleeding, Silent, Strategy, StrategyKind,
};
use crate::analysis::{
    check_common_prefix, check_liveness, check_total_order, metrics, tally, RunMetrics, RunTrace, Violation,
    ViolationKind,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::{AllocatorKind, Sim, SimConfig};
use crate::tx::ProcessId;

/// The engine configuration for one seed of a scenario.
pub fn sim_config(cfg: &ScenarioConfig, seed: u64) -> SimConfig {
    let mut sc = SimConfig::new(cfg.allocator, Vec::new(), cfg.rho, seed);
    sc.delta = cfg.delta;
    sc.delay_model = cfg.delay_model;
    sc.k = cfg.k;
    sc.q = cfg.q();
    sc.steps_per_slot = cfg.steps_per_slot;
    sc.block_cap = cfg.block_size_cap;
    sc.tx_interval = cfg.tx_interval;
    sc.reward = cfg.reward;
    sc.retarget_window = cfg.retarget_window;
    sc.corruption_budget = cfg.attack.corruption_budget.unwrap_or(cfg.r_a);
    if cfg.attack.strategy == StrategyKind::LongRange {
        let layout = shift_layout(cfg.r, cfg.r_a, cfg.release_step(), 10 * cfg.delta).expect("validated config");
        sc.stakes = layout.stakes;
        sc.alloc_traces = layout.alloc_traces;
        sc.byzantine = BTreeSet::from([layout.byzantine]);
        sc.scripted = layout.scripted;
        return sc;
    }
    let n = cfg.n_processes;
    let honest = if cfg.r_a > 0 { n - 1 } else { n };
    let pool = cfg.r - cfg.r_a;
    sc.stakes = (0..honest).map(|i| pool / honest as u64 + u64::from((i as u64) < pool % honest as u64)).collect();
    if cfg.r_a > 0 {
        sc.stakes.push(cfg.r_a);
        sc.byzantine.insert(ProcessId(honest as u32));
    }
    sc
}

fn strategy(cfg: &ScenarioConfig) -> Box<dyn Strategy> {
    let a = &cfg.attack;
    let patience = a.patience.unwrap_or(cfg.horizon);
    match a.strategy {
        StrategyKind::None => Box::new(Silent),
        StrategyKind::Private => Box::new(PrivateAttack::new(a.fork_height.unwrap_or(0), patience)),
        StrategyKind::LongRange => Box::new(LongRange::new(cfg.r, cfg.r_a, a.fork_height, patience)),
        StrategyKind::NothingAtStake => Box::new(NothingAtStake::new(a.tips.unwrap_or(2))),
        StrategyKind::ResourceBleeding => Box::new(ResourceBleeding::new(
            cfg.retarget_window.unwrap_or(cfg.q()),
            a.fork_height.unwrap_or(0),
            patience,
        )),
    }
}

/// Runs one seed and returns the raw trace with the attack outcome. The
/// run stops at the horizon, or `settle` steps after the attack concludes.
pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> (RunTrace, AttackOutcome) {
    let mut sim = Sim::new(&sim_config(cfg, seed));
    let mut strat = strategy(cfg);
    let settle = cfg.settle();
    while sim.now() < cfg.horizon {
        if strat.finished_at().is_some_and(|f| sim.now() >= f + settle) {
            break;
        }
        sim.step(&mut *strat);
    }
    let trace = sim.finish();
    let outcome = strat.outcome(&trace);
    (trace, outcome)
}

/// All checker findings for a trace under a scenario's parameters.
pub fn check(cfg: &ScenarioConfig, trace: &RunTrace) -> Vec<Violation> {
    let mut v = check_common_prefix(trace, cfg.k);
    v.extend(check_total_order(trace, cfg.agreement_slack()));
    v.extend(check_liveness(trace, cfg.liveness_window()));
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRow {
    pub seed: u64,
    pub allocator: AllocatorKind,
    pub attack: StrategyKind,
    pub metrics: RunMetrics,
    pub violations: BTreeMap<ViolationKind, usize>,
    pub outcome: AttackOutcome,
}

impl SeedRow {
    fn count(&self, kinds: &[ViolationKind]) -> usize {
        kinds.iter().map(|k| self.violations.get(k).copied().unwrap_or(0)).sum()
    }

    pub fn cp_violations(&self) -> usize {
        self.count(&[ViolationKind::CommonPrefix])
    }

    /// Total order, no duplication and agreement together.
    pub fn to_violations(&self) -> usize {
        self.count(&[ViolationKind::TotalOrder, ViolationKind::NoDuplication, ViolationKind::Agreement])
    }

    pub fn live_violations(&self) -> usize {
        self.count(&[ViolationKind::Liveness])
    }

    pub fn any_violation(&self) -> bool {
        self.violations.values().any(|&n| n > 0)
    }
}

pub fn run_seed(cfg: &ScenarioConfig, seed: u64) -> SeedRow {
    let (trace, outcome) = simulate(cfg, seed);
    let violations = tally(&check(cfg, &trace));
    SeedRow {
        seed,
        allocator: cfg.allocator,
        attack: cfg.attack.strategy,
        metrics: metrics(&trace),
        violations,
        outcome,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub allocator: AllocatorKind,
    pub attack: StrategyKind,
    pub rows: Vec<SeedRow>,
    pub warnings: Vec<String>,
}

/// Means over seeds; the attack success rate comes with its binomial
/// standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub steps: f64,
    pub honest_blocks: f64,
    pub byz_blocks: f64,
    pub longest_len: f64,
    pub forks: f64,
    pub cp_violations: f64,
    pub to_violations: f64,
    pub live_violations: f64,
    pub attack_success: f64,
    pub attack_success_se: f64,
    pub cost_burn: f64,
    pub cost_reuse: f64,
}

impl RunReport {
    pub fn aggregate(&self) -> Option<Aggregate> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let mean = |f: &dyn Fn(&SeedRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        let p = mean(&|r| r.outcome.success as u8 as f64);
        Some(Aggregate {
            steps: mean(&|r| r.metrics.steps as f64),
            honest_blocks: mean(&|r| r.metrics.honest_blocks as f64),
            byz_blocks: mean(&|r| r.metrics.byz_blocks as f64),
            longest_len: mean(&|r| r.metrics.longest_len as f64),
            forks: mean(&|r| r.metrics.forks as f64),
            cp_violations: mean(&|r| r.cp_violations() as f64),
            to_violations: mean(&|r| r.to_violations() as f64),
            live_violations: mean(&|r| r.live_violations() as f64),
            attack_success: p,
            attack_success_se: (p * (1.0 - p) / n).sqrt(),
            cost_burn: mean(&|r| r.outcome.cost.burn as f64),
            cost_reuse: mean(&|r| r.outcome.cost.reuse as f64),
        })
    }

    pub fn has_violations(&self) -> bool {
        self.rows.iter().any(SeedRow::any_violation)
    }
}

/// Validates the config and runs every seed in ascending order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ConfigError> {
    run_scenario_with(cfg, |_| {})
}

/// [`run_scenario`] with a callback after each seed.
pub fn run_scenario_with(cfg: &ScenarioConfig, mut on_row: impl FnMut(&SeedRow)) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let rows = seeds
        .into_iter()
        .map(|s| {
            let row = run_seed(cfg, s);
            on_row(&row);
            row
        })
        .collect();
    Ok(RunReport { allocator: cfg.allocator, attack: cfg.attack.strategy, rows, warnings: cfg.warnings() })
}

//! Scenario configuration: a versioned JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{long_range::shift_layout, AttackConfig, StrategyKind};
use crate::allocator::honest_majority_holds;
use crate::engine::AllocatorKind;
use crate::network::DelayModel;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub allocator: AllocatorKind,
    pub n_processes: usize,
    /// Total resource.
    #[serde(rename = "R")]
    pub r: u64,
    /// Resource held by the adversary, and its default corruption budget.
    #[serde(rename = "R_A")]
    pub r_a: u64,
    pub rho: f64,
    pub delta: u64,
    pub k: usize,
    /// Epoch length in slots; defaults to `16·k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(default = "default_steps_per_slot")]
    pub steps_per_slot: u64,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub delay_model: DelayModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retarget_window: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size_cap: Option<usize>,
    /// Steps between payload transactions of each correct process; 0
    /// disables the workload.
    #[serde(default = "default_tx_interval")]
    pub tx_interval: u64,
    /// Block reward credited to the producer's liquid balance.
    #[serde(default)]
    pub reward: u64,
    /// Liveness window `u` in steps; defaults to `⌈50/ϱ_H⌉` slots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liveness_window: Option<u64>,
    /// Steps simulated after an attack concludes; defaults to a few
    /// confirmation depths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle: Option<u64>,
}

fn default_steps_per_slot() -> u64 {
    1
}

fn default_tx_interval() -> u64 {
    50
}

/// A configuration problem, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn bad(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError { field, message: message.into() }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// Largest `R` accepted; the shifting-event search is pseudo-polynomial in
/// `R_A`.
pub const MAX_TOTAL_RESOURCE: u64 = 1_000_000;

impl ScenarioConfig {
    /// Honest-run defaults: 20 processes, `R = 100`, `k = 6`, Δ = 1.
    pub fn honest(allocator: AllocatorKind, rho: f64) -> Self {
        ScenarioConfig {
            version: CONFIG_VERSION,
            allocator,
            n_processes: 20,
            r: 100,
            r_a: 0,
            rho,
            delta: 1,
            k: 6,
            q: None,
            steps_per_slot: 1,
            horizon: 5000,
            seeds: (0..10).collect(),
            attack: AttackConfig::default(),
            delay_model: DelayModel::Fixed,
            retarget_window: None,
            block_size_cap: None,
            tx_interval: default_tx_interval(),
            reward: 0,
            liveness_window: None,
            settle: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: p.clone(), source })?;
        let cfg = Self::from_json(&text).map_err(|source| LoadError::Parse { path: p, source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn q(&self) -> u64 {
        self.q.unwrap_or((self.k as u64).saturating_mul(16))
    }

    /// Per-slot probability that some correct process is elected.
    pub fn rho_honest(&self) -> f64 {
        1.0 - (1.0 - self.rho).powf((self.r - self.r_a.min(self.r)) as f64)
    }

    /// Liveness window in steps.
    pub fn liveness_window(&self) -> u64 {
        self.liveness_window.unwrap_or_else(|| ((50.0 / self.rho_honest()).ceil() as u64).saturating_mul(self.steps_per_slot))
    }

    /// Slack before "eventually delivered" is checked: Δ plus the expected
    /// time for `k` honest blocks.
    pub fn agreement_slack(&self) -> u64 {
        self.delta.saturating_add(((self.k as f64 / self.rho_honest()).ceil() as u64).saturating_mul(self.steps_per_slot))
    }

    pub fn settle(&self) -> u64 {
        self.settle.unwrap_or_else(|| 200.max(self.agreement_slack().saturating_mul(4)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(bad("version", format!("expected {CONFIG_VERSION}, got {}", self.version)));
        }
        if self.n_processes == 0 {
            return Err(bad("n_processes", "must be at least 1"));
        }
        if self.r == 0 || self.r > MAX_TOTAL_RESOURCE {
            return Err(bad("R", format!("must be in 1..={MAX_TOTAL_RESOURCE}")));
        }
        if self.r_a >= self.r {
            return Err(bad("R_A", "must be below R"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(bad("rho", "must lie strictly between 0 and 1"));
        }
        if self.delta == 0 {
            return Err(bad("delta", "must be at least 1"));
        }
        if self.k == 0 {
            return Err(bad("k", "must be at least 1"));
        }
        if self.q() == 0 {
            return Err(bad("q", "must be at least 1"));
        }
        if self.steps_per_slot == 0 {
            return Err(bad("steps_per_slot", "must be at least 1"));
        }
        if self.horizon < self.q() {
            return Err(bad("horizon", format!("must be at least q = {}", self.q())));
        }
        if self.retarget_window == Some(0) {
            return Err(bad("retarget_window", "must be at least 1"));
        }
        if self.r_a > 0 && self.n_processes < 2 {
            return Err(bad("n_processes", "an adversary needs at least one correct process beside it"));
        }
        match self.attack.strategy {
            StrategyKind::LongRange => {
                let layout = shift_layout(self.r, self.r_a, self.release_step(), 1).map_err(|m| bad("attack", m))?;
                if layout.stakes.len() != self.n_processes {
                    return Err(bad(
                        "n_processes",
                        format!("the shifting scenario for R = {}, R_A = {} has {} processes", self.r, self.r_a, layout.stakes.len()),
                    ));
                }
                if self.release_step() >= self.horizon {
                    return Err(bad("attack", "release_schedule must fall inside the horizon"));
                }
            }
            StrategyKind::NothingAtStake => {
                if self.attack.tips.unwrap_or(2) < 2 {
                    return Err(bad("attack", "nothing_at_stake needs at least 2 tips"));
                }
            }
            StrategyKind::ResourceBleeding => {
                if self.allocator == AllocatorKind::Pow {
                    return Err(bad("allocator", "resource_bleeding needs a reusable resource; the same burnable resource cannot be used twice"));
                }
                if self.retarget_window.is_none() {
                    return Err(bad("retarget_window", "resource_bleeding needs retargeting enabled"));
                }
            }
            StrategyKind::None | StrategyKind::Private => {}
        }
        if self.attack.strategy != StrategyKind::None && self.r_a == 0 && self.attack.strategy != StrategyKind::Private {
            return Err(bad("R_A", "this attack needs a Byzantine process"));
        }
        Ok(())
    }

    /// Step at which the long-range majority releases its resources.
    pub fn release_step(&self) -> u64 {
        self.attack.release_schedule.unwrap_or_else(|| (self.horizon / 10).max(self.q().saturating_mul(3)))
    }

    /// Warnings that do not stop a run, such as an adversary above the
    /// honest-majority threshold.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.validate().is_ok() && !honest_majority_holds(self.r, self.r_a, self.rho, self.delta) {
            w.push(format!(
                "R_A = {} violates the honest-majority threshold for R = {}, rho = {}, delta = {}",
                self.r_a, self.r, self.rho, self.delta
            ));
        }
        w
    }
}

//! Honest-majority assignment threshold.

/// Result of [`honest_majority_max_budget`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Threshold {
    /// Largest adversarial budget satisfying the condition (0 if none).
    pub max: u64,
    /// False when no budget, not even 0, satisfies it.
    pub feasible: bool,
}

/// Whether an adversary with `r_a` of `r` units respects
/// `ϱ_A < 1 / (Δ - 1 + 1/ϱ_H)`, where `ϱ_X = 1-(1-ϱ)^{R_X}`.
///
/// Evaluated as `ϱ_A·((Δ-1)·ϱ_H + 1) < ϱ_H`, which is the same inequality
/// multiplied through by `ϱ_H > 0`, so `Δ = 1` compares `ϱ_A < ϱ_H` exactly.
pub fn honest_majority_holds(r: u64, r_a: u64, rho: f64, delta: u64) -> bool {
    if r_a > r {
        return false;
    }
    let rho_a = 1.0 - (1.0 - rho).powf(r_a as f64);
    let rho_h = 1.0 - (1.0 - rho).powf((r - r_a) as f64);
    if rho_h <= 0.0 {
        return false;
    }
    rho_a * ((delta.saturating_sub(1)) as f64 * rho_h + 1.0) < rho_h
}

/// Largest `R_A` in `0..=R` for which the honest-majority condition holds,
/// found by scanning every candidate.
pub fn honest_majority_max_budget(r: u64, rho: f64, delta: u64) -> Threshold {
    let best = (0..=r).filter(|&ra| honest_majority_holds(r, ra, rho, delta)).max();
    match best {
        Some(max) => Threshold { max, feasible: true },
        None => Threshold { max: 0, feasible: false },
    }
}

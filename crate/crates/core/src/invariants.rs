//! Process-wide tally of pathwise invariant checks.
//!
//! Simulation routines record every check they perform here, so a run can
//! report "n checks, 0 violations" at the end without threading counters
//! through every call.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Invariant {
    /// `Y_t` nondecreasing under the reverse flow.
    ReverseYMonotone,
    /// `Y_t^2 <= 2 a t + y^2`.
    ReverseYBound,
    /// `|h_t'| / Y_t` nonincreasing.
    PsiMonotone,
    /// `|h_t'(z)| <= sqrt(2 a t / y^2 + 1)`.
    DerivativeBound,
    /// `Upsilon_t` nonincreasing under the forward flow.
    UpsilonMonotone,
    /// `|L_t| <= t`.
    LBound,
    /// `sigma(t) >= (e^{2at} - 1) / (2a)`.
    SigmaLowerBound,
    /// `sigma` strictly increasing.
    SigmaMonotone,
    /// Chain capacity equals `a T`.
    HcapAdditive,
}

pub const ALL: [Invariant; 9] = [
    Invariant::ReverseYMonotone,
    Invariant::ReverseYBound,
    Invariant::PsiMonotone,
    Invariant::DerivativeBound,
    Invariant::UpsilonMonotone,
    Invariant::LBound,
    Invariant::SigmaLowerBound,
    Invariant::SigmaMonotone,
    Invariant::HcapAdditive,
];

static CHECKS: [AtomicU64; 9] = [const { AtomicU64::new(0) }; 9];
static VIOLATIONS: [AtomicU64; 9] = [const { AtomicU64::new(0) }; 9];

/// Relative slack for checks whose equality case is attained (the zero
/// driver), where rounding alone can cross the bound.
pub const SLACK: f64 = 1e-9;

pub fn record(inv: Invariant, checks: u64, violations: u64) {
    CHECKS[inv as usize].fetch_add(checks, Ordering::Relaxed);
    VIOLATIONS[inv as usize].fetch_add(violations, Ordering::Relaxed);
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tally {
    pub invariant: Invariant,
    pub checks: u64,
    pub violations: u64,
}

pub fn snapshot() -> Vec<Tally> {
    ALL.iter()
        .map(|&invariant| Tally {
            invariant,
            checks: CHECKS[invariant as usize].load(Ordering::Relaxed),
            violations: VIOLATIONS[invariant as usize].load(Ordering::Relaxed),
        })
        .collect()
}

pub fn total_violations() -> u64 {
    VIOLATIONS.iter().map(|v| v.load(Ordering::Relaxed)).sum()
}

//! Bound calculators checked against exact oracles, the test statistics
//! of the contraction proofs, and the noise events behind the selection
//! result.

mod chi2;
mod overfit;
mod pelekis;
mod phi;
mod rate;

use serde::Serialize;

pub use chi2::{chi2_norm_bounds, chi2_tail_bound, chi2_tail_formula};
pub use overfit::{conditional_ratio, omega_event_frequency, OmegaEvent, OmegaReport};
pub use pelekis::{binomial_upper_tail, pelekis_bound};
pub use phi::{phi_statistics, phi_statistics_from, PhiResult, PhiStatistics};
pub use rate::{posterior_ratio_bound, selection_rate, SelectionRateReport, SizeMassReading};

/// A bound next to the exact quantity it is meant to dominate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparison {
    pub check: String,
    pub bound: f64,
    pub exact: f64,
    pub tolerance: f64,
    /// `exact <= bound + tolerance`.
    pub holds: bool,
    /// Whether the bound is claimed to hold; unasserted verdicts are
    /// reported only.
    pub asserted: bool,
    pub context: Vec<(String, f64)>,
}

impl BoundComparison {
    pub fn upper(check: &str, bound: f64, exact: f64, tolerance: f64, context: Vec<(&str, f64)>) -> Self {
        Self {
            check: check.to_string(),
            bound,
            exact,
            tolerance,
            holds: exact <= bound + tolerance,
            asserted: true,
            context: context.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.context.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// An asserted bound that fails.
    pub fn violated(&self) -> bool {
        self.asserted && !self.holds
    }
}

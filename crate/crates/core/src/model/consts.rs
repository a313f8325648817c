use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Estimation rate `sqrt(s log p / n)`.
pub fn epsilon_n(n: usize, p: usize, s: usize) -> Result<f64> {
    if n < 2 || p < 2 || s < 1 {
        return invalid(format!("epsilon_n needs n, p >= 2 and s >= 1 (got n={n}, p={p}, s={s})"));
    }
    Ok((s as f64 * (p as f64).ln() / n as f64).sqrt())
}

/// Constants appearing in the prior assumptions, the eigenvalue condition and
/// the contraction/selection theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub eta: f64,
}

impl Default for RegularityConstants {
    fn default() -> Self {
        Self { a1: 0.5, a2: 2.0, a3: 1.0, k: 2.0, m1: 6.0, m2: 6.0, m3: 4.5, eta: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PremiseReport {
    /// `A1 + A3 + 1 < A2 K`
    pub contraction_premise: bool,
    /// `M1, M2 > sqrt(8 max(A2, 1) K)`
    pub m12_premise: bool,
    /// `M3 > sqrt(8 A3 K)`
    pub m3_premise: bool,
    pub m12_threshold: f64,
    pub m3_threshold: f64,
}

impl RegularityConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("A1", self.a1),
            ("A2", self.a2),
            ("A3", self.a3),
            ("K", self.k),
            ("M1", self.m1),
            ("M2", self.m2),
            ("M3", self.m3),
            ("eta", self.eta),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("constant {name} must be finite and positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn premises(&self) -> PremiseReport {
        let m12_threshold = (8.0 * self.a2.max(1.0) * self.k).sqrt();
        let m3_threshold = (8.0 * self.a3 * self.k).sqrt();
        PremiseReport {
            contraction_premise: self.a1 + self.a3 + 1.0 < self.a2 * self.k,
            m12_premise: self.m1 > m12_threshold && self.m2 > m12_threshold,
            m3_premise: self.m3 > m3_threshold,
            m12_threshold,
            m3_threshold,
        }
    }

    /// Largest overfit size `floor(K s)`.
    pub fn overfit_cap(&self, s: usize) -> usize {
        (self.k * s as f64 + 1e-9).floor() as usize
    }
}

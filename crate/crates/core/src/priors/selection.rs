use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelIndex;
use crate::special::{ln_choose, log_sum_exp};

/// Base of the CSV weights `w(t) ∝ base^{-t}`, either a constant or a power
/// of the dimension written `p^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsvBase {
    Fixed(f64),
    PowerOfP(f64),
}

impl CsvBase {
    pub fn ln_value(&self, p: usize) -> f64 {
        match *self {
            CsvBase::Fixed(b) => b.ln(),
            CsvBase::PowerOfP(k) => k * (p as f64).ln(),
        }
    }
}

impl fmt::Display for CsvBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvBase::Fixed(b) => write!(f, "{b}"),
            CsvBase::PowerOfP(k) => write!(f, "p^{k}"),
        }
    }
}

impl FromStr for CsvBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parsed = match s.strip_prefix("p^") {
            Some(k) => k.trim().parse().map(CsvBase::PowerOfP),
            None => s.parse().map(CsvBase::Fixed),
        };
        parsed.map_err(|_| Error::Parse(format!("csv base '{s}' is neither a number nor p^k")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CsvBaseRepr {
    Number(f64),
    Text(String),
}

impl Serialize for CsvBase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            CsvBase::Fixed(b) => CsvBaseRepr::Number(b),
            CsvBase::PowerOfP(_) => CsvBaseRepr::Text(self.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CsvBase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match CsvBaseRepr::deserialize(d)? {
            CsvBaseRepr::Number(b) => Ok(CsvBase::Fixed(b)),
            CsvBaseRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Model selection prior `pi(xi)`, normalized over all `2^p` subsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSelectionPrior {
    /// Each index enters independently with probability `1/p`.
    Bernoulli,
    /// Size weights `w(t) ∝ base^{-t}`, spread uniformly within a size.
    Csv { csv_base: CsvBase },
}

impl ModelSelectionPrior {
    pub fn validate(&self) -> Result<()> {
        if let ModelSelectionPrior::Csv { csv_base } = self {
            let ok = match *csv_base {
                CsvBase::Fixed(b) => b > 0.0 && b.is_finite(),
                CsvBase::PowerOfP(k) => k.is_finite(),
            };
            if !ok {
                return invalid(format!("csv base {csv_base} must be positive"));
            }
        }
        Ok(())
    }

    /// `log pi(|xi| = t)` for `t = 0..=p`.
    pub fn ln_size_marginals(&self, p: usize) -> Vec<f64> {
        match self {
            ModelSelectionPrior::Bernoulli => {
                let mu = 1.0 / p as f64;
                let (lm, l1m) = (mu.ln(), (-mu).ln_1p());
                (0..=p)
                    .map(|t| {
                        // (1-mu)^p with p = 1 is 0; keep it exact
                        let rest = if p - t == 0 { 0.0 } else { (p - t) as f64 * l1m };
                        ln_choose(p, t) + t as f64 * lm + rest
                    })
                    .collect()
            }
            ModelSelectionPrior::Csv { csv_base } => {
                let lb = csv_base.ln_value(p);
                let raw: Vec<f64> = (0..=p).map(|t| -(t as f64) * lb).collect();
                let z = log_sum_exp(raw.iter().copied());
                raw.into_iter().map(|r| r - z).collect()
            }
        }
    }

    pub fn size_marginal(&self, t: usize, p: usize) -> f64 {
        if t > p {
            return 0.0;
        }
        self.ln_size_marginals(p)[t].exp()
    }

    /// CSV weight sequence `w(0..=p)`; `None` for the Bernoulli kind.
    pub fn csv_weights(&self, p: usize) -> Option<Vec<f64>> {
        match self {
            ModelSelectionPrior::Bernoulli => None,
            ModelSelectionPrior::Csv { .. } => Some(self.ln_size_marginals(p).into_iter().map(f64::exp).collect()),
        }
    }

    /// `log pi(xi)` for any model of size `t`.
    pub fn ln_mass_of_size(&self, t: usize, p: usize) -> f64 {
        if t > p {
            return f64::NEG_INFINITY;
        }
        self.ln_size_marginals(p)[t] - ln_choose(p, t)
    }

    /// Per-size `log pi(xi)` table, `t = 0..=p`.
    pub fn ln_mass_table(&self, p: usize) -> Vec<f64> {
        self.ln_size_marginals(p).into_iter().enumerate().map(|(t, m)| m - ln_choose(p, t)).collect()
    }

    /// `sum_{|xi| > t} pi(xi)`, summed from the small terms upward.
    pub fn tail(&self, t: usize, p: usize) -> f64 {
        if t >= p {
            return 0.0;
        }
        let lm = self.ln_size_marginals(p);
        log_sum_exp(lm[t + 1..].iter().copied()).exp()
    }
}

/// Exact prior mass of `xi` over all `2^p` models.
pub fn selection_mass(selection: &ModelSelectionPrior, xi: &ModelIndex, p: usize) -> Result<f64> {
    xi.check_within(p)?;
    selection.validate()?;
    Ok(selection.ln_mass_of_size(xi.len(), p).exp())
}

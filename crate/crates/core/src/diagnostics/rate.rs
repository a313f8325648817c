use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::priors::PriorSpec;

/// How `pi(|xi| = s + j)` is read in the size factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeMassReading {
    /// Total prior mass of all models of that size.
    #[default]
    Total,
    /// Prior mass of a single model of that size.
    PerModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRateReport {
    pub r_n: f64,
    /// `[pi(|xi| = s+j)/pi(xi*)]^{1/j}` for `j = 1..=floor(K s)`.
    pub size_factors: Vec<f64>,
    /// `sup h1 * p^{1+eta} / sqrt(n lambda)`.
    pub slab_factor: f64,
    pub reading: SizeMassReading,
    pub below_one: bool,
}

impl SelectionRateReport {
    /// Largest size factor; zero when there are none.
    pub fn max_size_factor(&self) -> f64 {
        self.size_factors.iter().copied().fold(0.0, f64::max)
    }
}

/// Selection rate `r_n = max_j [pi(|xi|=s+j)/pi(xi*)]^{1/j} * sup h1 *
/// p^{1+eta}/sqrt(n lambda)`. With `floor(K s) = 0` there is no overfitted
/// size and `r_n = 0`.
#[allow(clippy::too_many_arguments)]
pub fn selection_rate(
    prior: &PriorSpec,
    n: usize,
    p: usize,
    s: usize,
    lambda: f64,
    eta: f64,
    k: f64,
    reading: SizeMassReading,
) -> Result<SelectionRateReport> {
    prior.validate()?;
    if !(lambda > 0.0) {
        return invalid(format!("selection rate needs lambda > 0, got {lambda}"));
    }
    if s > p || n == 0 {
        return invalid(format!("need s <= p and n >= 1 (n={n}, p={p}, s={s})"));
    }
    let sel = &prior.selection;
    let ln_true = sel.ln_mass_of_size(s, p);
    let marg = sel.ln_size_marginals(p);
    let jmax = ((k * s as f64).floor() as usize).min(p - s);
    let size_factors: Vec<f64> = (1..=jmax)
        .map(|j| {
            let ln_num = match reading {
                SizeMassReading::Total => marg[s + j],
                SizeMassReading::PerModel => sel.ln_mass_of_size(s + j, p),
            };
            ((ln_num - ln_true) / j as f64).exp()
        })
        .collect();
    let slab_factor = prior.slab.sup_density() * (p as f64).powf(1.0 + eta) / (n as f64 * lambda).sqrt();
    let max = size_factors.iter().copied().fold(0.0, f64::max);
    let r_n = max * slab_factor;
    Ok(SelectionRateReport { r_n, size_factors, slab_factor, reading, below_one: r_n < 1.0 })
}

/// `2 (sqrt(2 pi/(n lambda)) sup h1 p^{1+eta})^{t-s}`.
pub fn posterior_ratio_bound(t_minus_s: u32, n: usize, p: usize, lambda: f64, eta: f64, sup_h1: f64) -> f64 {
    let base = (2.0 * std::f64::consts::PI / (n as f64 * lambda)).sqrt() * sup_h1 * (p as f64).powf(1.0 + eta);
    2.0 * base.powi(t_minus_s as i32)
}

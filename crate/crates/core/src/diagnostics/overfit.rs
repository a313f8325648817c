use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::eigen::subset_count;
use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::inference::{models_up_to, theta_tilde_given_model, Collapsed, SuffStats};
use crate::model::linalg::{columns, Projector};
use crate::model::{is_full_rank, ModelIndex, ProblemInstance, RegularityConstants};
use crate::priors::PriorSpec;
use crate::rng::{derive_seed, stream};
use crate::special::chi2_sf;

/// The noise event `Omega(eta)`: some full-rank superset of the truth
/// captures an unusually large share of the noise, or the noise itself is
/// large.
#[derive(Debug, Clone)]
pub struct OmegaEvent {
    /// Projectors onto `(I - P_{xi*}) X_B` with their thresholds
    /// `(2 + eta) |B| ln p`.
    increments: Vec<(Projector, f64)>,
    n: usize,
}

impl OmegaEvent {
    pub fn new(x: &DMatrix<f64>, xi_star: &ModelIndex, k: f64, eta: f64, cap: u128) -> Result<Self> {
        let (n, p) = x.shape();
        xi_star.check_within(p)?;
        if !(eta > 0.0) || !(k >= 0.0) {
            return invalid(format!("need eta > 0 and K >= 0 (eta={eta}, K={k})"));
        }
        let s = xi_star.len();
        let comp = xi_star.complement(p);
        let extra = ((k * s as f64).floor() as usize).min(comp.len());
        let required = subset_count(comp.len(), 1, extra);
        if required > cap {
            return Err(Error::BudgetExceeded { required, cap });
        }
        let base = Projector::span(x, xi_star);
        let ln_p = (p as f64).ln();
        let mut increments = Vec::new();
        for b in models_up_to(comp.len(), extra).into_iter().filter(|b| !b.is_empty()) {
            let b = ModelIndex::from_sorted_unchecked(b.members().iter().map(|&i| comp[i]).collect());
            if !is_full_rank(x, &xi_star.union(&b)).full_rank {
                continue;
            }
            let mut resid = columns(x, &b);
            for mut c in resid.column_iter_mut() {
                let proj = base.apply(&c.clone_owned());
                c -= proj;
            }
            increments.push((Projector::span_of(&resid), (2.0 + eta) * b.len() as f64 * ln_p));
        }
        Ok(Self { increments, n })
    }

    /// Number of supersets entering the first event.
    pub fn supersets(&self) -> usize {
        self.increments.len()
    }

    /// `(in Omega_1, in Omega_2)` for one standardized noise vector.
    pub fn occurs(&self, eps: &DVector<f64>) -> (bool, bool) {
        let o1 = self.increments.iter().any(|(pr, thr)| pr.norm_sq(eps) >= *thr);
        let o2 = eps.norm_squared() >= 4.0 * self.n as f64;
        (o1, o2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaReport {
    pub frequency: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub std_error: f64,
    /// `sum_j p^j P(chi2_j >= (2+eta) j ln p) + P(chi2_n >= 4n)`.
    pub union_bound: f64,
    pub supersets: usize,
    pub draws: usize,
}

/// Monte Carlo frequency of `Omega(eta)` under standard normal noise, next
/// to the chi-square union bound.
#[allow(clippy::too_many_arguments)]
pub fn omega_event_frequency(
    x: &DMatrix<f64>,
    xi_star: &ModelIndex,
    k: f64,
    eta: f64,
    draws: usize,
    seed: u64,
    cap: u128,
    exec: Exec,
) -> Result<OmegaReport> {
    if draws == 0 {
        return invalid("omega frequency needs at least one draw");
    }
    let ev = OmegaEvent::new(x, xi_star, k, eta, cap)?;
    let n = x.nrows();
    let hits = exec.map_range(draws, |d| {
        let mut rng = stream(derive_seed(seed, &[d as u64]));
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        ev.occurs(&eps)
    });
    let df = draws as f64;
    let count = |f: fn(&(bool, bool)) -> bool| hits.iter().filter(|h| f(h)).count() as f64 / df;
    let frequency = count(|h| h.0 || h.1);
    let omega1 = count(|h| h.0);
    let omega2 = count(|h| h.1);
    let p = x.ncols();
    let s = xi_star.len();
    let extra = ((k * s as f64).floor() as usize).min(p - s);
    let ln_p = (p as f64).ln();
    let union_bound = (1..=extra)
        .map(|j| {
            let jf = j as f64;
            (jf * ln_p).exp() * chi2_sf(jf, (2.0 + eta) * jf * ln_p)
        })
        .sum::<f64>()
        + chi2_sf(n as f64, 4.0 * n as f64);
    Ok(OmegaReport {
        frequency,
        omega1,
        omega2,
        std_error: (frequency * (1.0 - frequency) / df).sqrt(),
        union_bound,
        supersets: ev.supersets(),
        draws,
    })
}

/// `Pi(Theta~ | Y, xi) / Pi(Theta~ | Y, xi*)` with both sides unnormalized
/// over models: the evidence ratio times the ratio of conditional
/// probabilities of the good set, the latter by Monte Carlo.
#[allow(clippy::too_many_arguments)]
pub fn conditional_ratio(
    inst: &ProblemInstance,
    prior: &PriorSpec,
    xi: &ModelIndex,
    consts: &RegularityConstants,
    lambda: f64,
    z0n: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let gt = inst.truth()?;
    if !prior.is_conjugate() {
        return Err(Error::Unsupported("conditional ratio needs a conjugate prior".into()));
    }
    let stats = SuffStats::from_instance(inst);
    let num = Collapsed::for_model(&stats, prior, xi)?;
    let den = Collapsed::for_model(&stats, prior, &gt.xi_star)?;
    let pn = theta_tilde_given_model(&stats, inst, prior, xi, consts, lambda, z0n, draws, derive_seed(seed, &[0]))?;
    let pd =
        theta_tilde_given_model(&stats, inst, prior, &gt.xi_star, consts, lambda, z0n, draws, derive_seed(seed, &[1]))?;
    if pd == 0.0 {
        return Ok(if pn == 0.0 { f64::NAN } else { f64::INFINITY });
    }
    Ok((num.ln_evidence - den.ln_evidence).exp() * pn / pd)
}

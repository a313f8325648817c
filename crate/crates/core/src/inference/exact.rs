use std::collections::HashMap;

use serde::Serialize;

use super::evidence::{Collapsed, SuffStats};
use crate::eigen::subset_count;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{ModelIndex, ProblemInstance};
use crate::priors::PriorSpec;
use crate::special::log_sum_exp;

/// One enumerated model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEntry {
    pub model: ModelIndex,
    pub full_rank: bool,
    pub ln_prior: f64,
    /// `None` for rank-deficient models, which carry no mass.
    pub log_evidence: Option<f64>,
    pub mass: f64,
}

/// Posterior over all models up to a size cap, normalized over the
/// full-rank ones.
#[derive(Debug, Clone, Serialize)]
pub struct ModelPosterior {
    pub p: usize,
    pub max_size: usize,
    /// Enumeration order: by size, then lexicographic.
    pub entries: Vec<ModelEntry>,
    /// `log sum_xi pi(xi) m(Y | xi)` over the enumerated full-rank models.
    pub ln_normalizer: f64,
    /// Rigorous bound on the posterior mass above `max_size`, from the
    /// prior tail and the universal evidence ceiling.
    pub truncation_bound: f64,
    /// Prior tail times the largest enumerated evidence, relative to the
    /// normalizer. Cheap and usually much tighter, but not a bound.
    pub truncation_estimate: f64,
    #[serde(skip)]
    lookup: HashMap<ModelIndex, usize>,
}

impl ModelPosterior {
    pub fn mass_of(&self, xi: &ModelIndex) -> f64 {
        self.lookup.get(xi).map_or(0.0, |&i| self.entries[i].mass)
    }

    pub fn entry(&self, xi: &ModelIndex) -> Option<&ModelEntry> {
        self.lookup.get(xi).map(|&i| &self.entries[i])
    }

    /// Highest-mass model, ties to enumeration order.
    pub fn modal(&self) -> &ModelEntry {
        self.entries.iter().fold(&self.entries[0], |best, e| if e.mass > best.mass { e } else { best })
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Entries sorted by decreasing mass, ties in enumeration order.
    pub fn ranked(&self) -> Vec<&ModelEntry> {
        let mut v: Vec<&ModelEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| b.mass.total_cmp(&a.mass));
        v
    }
}

/// All subsets of `0..p` of size at most `max_size`, by size then
/// lexicographically.
pub(crate) fn models_up_to(p: usize, max_size: usize) -> Vec<ModelIndex> {
    let mut out = Vec::new();
    for k in 0..=max_size.min(p) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(ModelIndex::from_sorted_unchecked(idx.clone()));
            // next combination
            let mut i = k;
            while i > 0 && idx[i - 1] == p - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for r in i..k {
                idx[r] = idx[r - 1] + 1;
            }
        }
    }
    out
}

/// Exact model posterior by enumeration of every model of size at most
/// `max_size`.
pub fn exact_posterior(
    inst: &ProblemInstance,
    prior: &PriorSpec,
    max_size: usize,
    cap: u128,
    exec: Exec,
) -> Result<ModelPosterior> {
    prior.validate()?;
    if !prior.is_conjugate() {
        return Err(Error::Unsupported("exact posterior needs a conjugate prior".into()));
    }
    let p = inst.p();
    let max_size = max_size.min(p);
    let required = subset_count(p, 0, max_size);
    if required > cap {
        return Err(Error::BudgetExceeded { required, cap });
    }
    let stats = SuffStats::from_instance(inst);
    let table = prior.selection.ln_mass_table(p);
    let models = models_up_to(p, max_size);
    let evaluated: Vec<Result<(bool, Option<f64>)>> = exec.map(models.clone(), |xi| {
        if !stats.full_rank(&inst.x, &xi) {
            return Ok((false, None));
        }
        Ok((true, Some(Collapsed::for_model(&stats, prior, &xi)?.ln_evidence)))
    });

    let mut entries = Vec::with_capacity(models.len());
    for (xi, ev) in models.into_iter().zip(evaluated) {
        let (full_rank, log_evidence) = ev?;
        let ln_prior = table[xi.len()];
        entries.push(ModelEntry { model: xi, full_rank, ln_prior, log_evidence, mass: 0.0 });
    }
    let joint: Vec<f64> =
        entries.iter().map(|e| e.log_evidence.map_or(f64::NEG_INFINITY, |m| m + e.ln_prior)).collect();
    let ln_normalizer = log_sum_exp(joint.iter().copied());
    for (e, lj) in entries.iter_mut().zip(&joint) {
        if e.full_rank {
            e.mass = (lj - ln_normalizer).exp();
        }
    }

    let (truncation_bound, truncation_estimate) = if max_size >= p {
        (0.0, 0.0)
    } else {
        let tail = prior.selection.tail(max_size, p);
        let ceiling = ln_evidence_ceiling(&stats, prior);
        let best = entries.iter().filter_map(|e| e.log_evidence).fold(f64::NEG_INFINITY, f64::max);
        let rel = |ln_m: f64| {
            let ln_t = tail.ln() + ln_m - ln_normalizer;
            (ln_t - (1.0 + ln_t.exp()).ln()).exp()
        };
        (rel(ceiling), rel(best))
    };

    let lookup = entries.iter().enumerate().map(|(i, e)| (e.model.clone(), i)).collect();
    Ok(ModelPosterior { p, max_size, entries, ln_normalizer, truncation_bound, truncation_estimate, lookup })
}

/// Upper bound on `log m(Y | xi)` valid for every model: the determinant
/// term is at most one and the residual quadratic form is nonnegative.
fn ln_evidence_ceiling(stats: &SuffStats, prior: &PriorSpec) -> f64 {
    let (a, b) = prior.variance.shape_rate();
    let n2 = stats.n as f64 / 2.0;
    -n2 * 1.837_877_066_409_345_5 + prior.variance.ln_kernel_integral(a + n2, b)
        - prior.variance.ln_kernel_integral(a, b)
}

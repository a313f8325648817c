//! Posterior computation: closed-form evidence, exact enumeration over
//! models, a collapsed Metropolis-within-Gibbs sampler, and summaries of
//! the posterior events of the contraction and selection results.

mod evidence;
mod exact;
mod mcmc;
mod summary;

use std::collections::BTreeMap;

pub use evidence::{log_model_evidence, Collapsed, SuffStats};
pub(crate) use exact::models_up_to;
pub use exact::{exact_posterior, ModelEntry, ModelPosterior};
pub use mcmc::{effective_sample_size, mcmc_sample, mcmc_sample_with, Chain, Draw, MoveWeights, SamplerConfig};
pub use summary::{
    sigma_interval, summarize, theta_tilde_given_model, PosteriorSource, PosteriorSummary, SummaryOptions,
};

use crate::model::ModelIndex;

/// Total-variation distance between an exact posterior and chain
/// frequencies.
pub fn total_variation(exact: &ModelPosterior, freq: &BTreeMap<ModelIndex, f64>) -> f64 {
    let mut tv = 0.0;
    for e in &exact.entries {
        tv += (e.mass - freq.get(&e.model).copied().unwrap_or(0.0)).abs();
    }
    for (m, f) in freq {
        if exact.entry(m).is_none() {
            tv += f;
        }
    }
    tv / 2.0
}

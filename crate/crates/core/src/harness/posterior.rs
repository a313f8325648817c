use serde::Serialize;

use super::config::ExperimentConfig;
use super::row::{RowKey, StudyRow};
use super::study::{fit, instance_for, prepare_design, replication_seed, Fitted};
use crate::eigen::united_eigenvalue;
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::inference::{summarize, SuffStats, SummaryOptions};
use crate::model::ProblemInstance;
use crate::priors::compute_z0n;
use crate::rng::derive_seed;

/// Posterior mass of one model, ranked by mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub rank: usize,
    /// One-based column indices separated by spaces.
    pub model: String,
    pub size: usize,
    pub mass: f64,
    pub log_evidence: Option<f64>,
    pub source: &'static str,
}

#[derive(Debug, Clone)]
pub struct PosteriorRun {
    pub models: Vec<ModelRow>,
    /// Present when the instance carries its ground truth.
    pub summary: Option<StudyRow>,
}

fn model_rows(fitted: &Fitted, top: usize) -> Vec<ModelRow> {
    let mut rows: Vec<ModelRow> = match fitted {
        Fitted::Exact(e) => e
            .ranked()
            .into_iter()
            .map(|m| ModelRow {
                rank: 0,
                model: m.model.one_based_joined(" "),
                size: m.model.len(),
                mass: m.mass,
                log_evidence: m.log_evidence,
                source: "exact",
            })
            .collect(),
        Fitted::Chain(c) => {
            let mut v: Vec<_> = c.model_frequencies().into_iter().collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            v.into_iter()
                .map(|(m, f)| ModelRow {
                    rank: 0,
                    model: m.one_based_joined(" "),
                    size: m.len(),
                    mass: f,
                    log_evidence: None,
                    source: "mcmc",
                })
                .collect()
        }
    };
    rows.truncate(top);
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

/// Posterior of one instance: `data` when given, otherwise replication 0 of
/// the first grid point of `cfg`. Keeps the `top` most probable models.
pub fn run_posterior(cfg: &ExperimentConfig, data: Option<ProblemInstance>, top: usize) -> Result<PosteriorRun> {
    cfg.prior.validate()?;
    let seed = replication_seed(cfg.seed, 0, 0);
    let (inst, lambda) = match data {
        Some(inst) => {
            inst.validate()?;
            let lambda = match &inst.truth {
                Some(gt) => {
                    let s = gt.s();
                    let t = (s + cfg.constants.overfit_cap(s)).clamp(1, inst.p());
                    Some(united_eigenvalue(
                        &inst.x,
                        &gt.xi_star,
                        t,
                        cfg.inference.cap as u128,
                        derive_seed(cfg.seed, &[2, 0]),
                        Exec::Sequential,
                    )?)
                }
                None => None,
            };
            (inst, lambda)
        }
        None => {
            if cfg.grid.is_empty() {
                return invalid("posterior needs a data bundle or a grid point");
            }
            let d = prepare_design(cfg, 0)?;
            let m = cfg.signal.magnitude(d.point, cfg.sigma_star, cfg.constants.m3, d.lambda.value)?;
            (instance_for(&d, m, seed)?, Some(d.lambda))
        }
    };
    let fitted = fit(cfg, &inst, SuffStats::from_instance(&inst), seed)?;
    let models = model_rows(&fitted, top);
    let summary = match (&inst.truth, lambda) {
        (Some(gt), Some(l)) => {
            let key = RowKey {
                study: "posterior",
                grid_index: 0,
                n: inst.n(),
                p: inst.p(),
                s: gt.s(),
                arm: "main",
                replication: 0,
                design_seed: inst.seed.unwrap_or(0),
                seed,
            };
            let mut row = StudyRow::blank(key);
            row.lambda = Some(l.value);
            row.lambda_method = Some(l.method.tag());
            row.inference = Some(fitted.tag());
            let opts = SummaryOptions {
                draws_per_model: cfg.inference.draws_per_model,
                seed: derive_seed(seed, &[2]),
                min_mass: 1e-12,
                exec: Exec::Sequential,
            };
            let z0n = compute_z0n(&cfg.prior.spike, inst.n())?;
            let s = summarize(fitted.source(), &inst, &cfg.prior, &cfg.constants, l.value, z0n, &opts)?;
            row.fill_summary(&s);
            row.epsilon_n = Some(s.epsilon_n);
            row.posterior_mean_l2 = Some((&s.posterior_mean - &gt.beta_star).norm());
            Some(row)
        }
        _ => None,
    };
    Ok(PosteriorRun { models, summary })
}

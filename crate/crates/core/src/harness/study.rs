use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{ExperimentConfig, GridPoint, InferenceMode, SignalSpec, Study};
use super::row::{RowKey, StudyRow};
use crate::diagnostics::selection_rate;
use crate::eigen::{subset_count, united_eigenvalue, UnitedEigenvalue};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::inference::{
    exact_posterior, mcmc_sample_with, summarize, Chain, ModelPosterior, PosteriorSource, SuffStats, SummaryOptions,
};
use crate::model::{epsilon_n, generate_instance, CoefficientSpec, ProblemInstance};
use crate::priors::compute_z0n;
use crate::rng::derive_seed;

const DESIGN: u64 = 0;
const REPLICATION: u64 = 1;
const LAMBDA: u64 = 2;
const SAMPLER: u64 = 1;
const SUMMARY: u64 = 2;

/// Seed of the design draw at a grid point.
pub fn design_seed(master: u64, grid_index: usize) -> u64 {
    derive_seed(master, &[DESIGN, grid_index as u64])
}

/// Seed of one replication; both selection arms share it.
pub fn replication_seed(master: u64, grid_index: usize, replication: usize) -> u64 {
    derive_seed(master, &[REPLICATION, grid_index as u64, replication as u64])
}

/// A design with unit-magnitude truth and its united eigenvalue, shared by
/// every replication at one grid point.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    pub grid_index: usize,
    pub point: GridPoint,
    pub seed: u64,
    pub base: ProblemInstance,
    pub gram: DMatrix<f64>,
    pub lambda: UnitedEigenvalue,
}

/// Draw the design of grid point `g` and compute `lambda = MUEV((K+1)s)`.
pub fn prepare_design(cfg: &ExperimentConfig, g: usize) -> Result<PreparedDesign> {
    let point = cfg.grid[g];
    let seed = design_seed(cfg.seed, g);
    let unit = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
    let base = generate_instance(point.n, point.p, point.s, &unit, cfg.sigma_star, cfg.design, seed)?;
    let gt = base.truth()?;
    let t = (point.s + cfg.constants.overfit_cap(point.s)).clamp(1, point.p);
    let lambda = united_eigenvalue(
        &base.x,
        &gt.xi_star,
        t,
        cfg.inference.cap as u128,
        derive_seed(cfg.seed, &[LAMBDA, g as u64]),
        Exec::Sequential,
    )?;
    let gram = base.x.transpose() * &base.x;
    Ok(PreparedDesign { grid_index: g, point, seed, base, gram, lambda })
}

/// The design with coefficients scaled to `magnitude` and a fresh response.
pub fn instance_for(d: &PreparedDesign, magnitude: f64, seed: u64) -> Result<ProblemInstance> {
    let mut inst = d.base.clone();
    if let Some(gt) = inst.truth.as_mut() {
        gt.beta_star *= magnitude;
    }
    inst.redraw_noise(seed)
}

/// Posterior by exact enumeration or by MCMC.
#[derive(Debug, Clone)]
pub enum Fitted {
    Exact(ModelPosterior),
    Chain(Chain),
}

impl Fitted {
    pub fn tag(&self) -> &'static str {
        match self {
            Fitted::Exact(_) => "exact",
            Fitted::Chain(_) => "mcmc",
        }
    }

    pub fn source(&self) -> PosteriorSource<'_> {
        match self {
            Fitted::Exact(e) => PosteriorSource::Exact(e),
            Fitted::Chain(c) => PosteriorSource::Chain(c),
        }
    }
}

/// Run the configured inference on `inst`, seeding the sampler from `seed`.
pub fn fit(cfg: &ExperimentConfig, inst: &ProblemInstance, stats: SuffStats, seed: u64) -> Result<Fitted> {
    let p = inst.p();
    let inf = &cfg.inference;
    let max_size = inf.max_size.unwrap_or(p).min(p);
    let exact_fits = cfg.prior.is_conjugate() && subset_count(p, 0, max_size) <= inf.cap as u128;
    let exact = match inf.mode {
        InferenceMode::Exact => true,
        InferenceMode::Mcmc => false,
        InferenceMode::Auto => exact_fits,
    };
    if exact {
        Ok(Fitted::Exact(exact_posterior(inst, &cfg.prior, max_size, inf.cap as u128, Exec::Sequential)?))
    } else {
        let mut sc = inf.sampler.clone();
        sc.seed = derive_seed(seed, &[SAMPLER]);
        Ok(Fitted::Chain(mcmc_sample_with(inst, &cfg.prior, &sc, stats)?))
    }
}

fn replicate(cfg: &ExperimentConfig, d: &PreparedDesign, signal: &SignalSpec, row: &mut StudyRow) -> Result<()> {
    let GridPoint { n, p, s } = d.point;
    let c = &cfg.constants;
    let lambda = d.lambda.value;
    row.lambda = Some(lambda);
    row.lambda_method = Some(d.lambda.method.tag());
    let eps = epsilon_n(n, p, s.max(1))?;
    row.epsilon_n = Some(eps);
    if lambda > 0.0 {
        row.beta_min = Some(c.m3 * cfg.sigma_star * eps / lambda.sqrt());
        row.l2_reference = Some(3.0 * cfg.sigma_star * eps / lambda.sqrt());
        let rate = selection_rate(&cfg.prior, n, p, s, lambda, c.eta, c.k, cfg.select.reading)?;
        row.r_n = Some(rate.r_n);
        row.rate_below_one = Some(rate.below_one);
    }
    let magnitude = signal.magnitude(d.point, cfg.sigma_star, c.m3, lambda)?;
    row.signal = Some(magnitude);

    let inst = instance_for(d, magnitude, row.seed)?;
    let stats = SuffStats::with_gram(&inst.x, d.gram.clone(), &inst.y);
    let fitted = fit(cfg, &inst, stats, row.seed)?;
    row.inference = Some(fitted.tag());
    if let Fitted::Chain(ch) = &fitted {
        row.acceptance = Some(ch.acceptance_rate());
    }
    let z0n = compute_z0n(&cfg.prior.spike, n)?;
    let opts = SummaryOptions {
        draws_per_model: cfg.inference.draws_per_model,
        seed: derive_seed(row.seed, &[SUMMARY]),
        min_mass: 1e-12,
        exec: Exec::Sequential,
    };
    let summary = summarize(fitted.source(), &inst, &cfg.prior, c, lambda, z0n, &opts)?;
    row.fill_summary(&summary);
    row.posterior_mean_l2 = Some((&summary.posterior_mean - &inst.truth()?.beta_star).norm());
    Ok(())
}

fn run_one(
    cfg: &ExperimentConfig,
    design: &std::result::Result<PreparedDesign, String>,
    key: RowKey,
    signal: &SignalSpec,
) -> StudyRow {
    let d = match design {
        Ok(d) => d,
        Err(e) => return StudyRow::failed(key, format!("design: {e}")),
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut row = StudyRow::blank(key);
        replicate(cfg, d, signal, &mut row).map(|_| row)
    }));
    match outcome {
        Ok(Ok(row)) => row,
        Ok(Err(e)) => StudyRow::failed(key, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            StudyRow::failed(key, format!("panic: {msg}"))
        }
    }
}

fn run_rows(cfg: &ExperimentConfig, arms: &[(&'static str, SignalSpec)], exec: Exec) -> Vec<StudyRow> {
    let designs: Vec<std::result::Result<PreparedDesign, String>> =
        exec.map_range(cfg.grid.len(), |g| prepare_design(cfg, g).map_err(|e| e.to_string()));
    let mut jobs = Vec::new();
    for (g, point) in cfg.grid.iter().enumerate() {
        for &(arm, signal) in arms {
            for r in 0..cfg.replications {
                let key = RowKey {
                    study: cfg.study.tag(),
                    grid_index: g,
                    n: point.n,
                    p: point.p,
                    s: point.s,
                    arm,
                    replication: r,
                    design_seed: design_seed(cfg.seed, g),
                    seed: replication_seed(cfg.seed, g, r),
                };
                jobs.push((key, signal));
            }
        }
    }
    exec.map(jobs, |(key, signal)| run_one(cfg, &designs[key.grid_index], key, &signal))
}

/// Replications of the contraction study: one row per grid point and
/// replication, in that order.
pub fn run_contraction_study(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<StudyRow>> {
    if cfg.study != Study::Contract {
        return invalid(format!("expected a contract study, got {}", cfg.study.tag()));
    }
    cfg.validate()?;
    Ok(run_rows(cfg, &[("main", cfg.signal)], exec))
}

/// Paired above- and below-threshold arms of the selection study on the
/// same designs and noise.
pub fn run_selection_study(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<StudyRow>> {
    if cfg.study != Study::Select {
        return invalid(format!("expected a select study, got {}", cfg.study.tag()));
    }
    cfg.validate()?;
    Ok(run_rows(cfg, &[("above", cfg.signal), ("below", cfg.below_signal())], exec))
}

/// Per grid point and arm aggregates of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAggregate {
    pub study: &'static str,
    pub grid_index: usize,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub arm: &'static str,
    pub replications: usize,
    pub errors: usize,
    pub lambda: Option<f64>,
    pub epsilon_n: Option<f64>,
    pub r_n: Option<f64>,
    pub rate_below_one: Option<bool>,
    pub median_posterior_mean_l2: Option<f64>,
    pub l2_reference: Option<f64>,
    /// Share of replications with posterior-mean error within the reference.
    pub within_l2_reference: Option<f64>,
    pub mean_prob_true_model: Option<f64>,
    pub mean_theta_hat: Option<f64>,
    pub mean_theta_tilde: Option<f64>,
    pub mean_size_clause: Option<f64>,
    /// Share of replications with size clause above 0.95.
    pub size_clause_above_095: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn share(flags: &[bool]) -> Option<f64> {
    (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Aggregate rows by `(grid_index, arm)` in first-appearance order.
pub fn aggregate(rows: &[StudyRow]) -> Vec<GridAggregate> {
    let mut keys: Vec<(usize, &'static str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.grid_index, r.arm)) {
            keys.push((r.grid_index, r.arm));
        }
    }
    keys.into_iter()
        .map(|(g, arm)| {
            let group: Vec<&StudyRow> = rows.iter().filter(|r| r.grid_index == g && r.arm == arm).collect();
            let ok: Vec<&StudyRow> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let first = ok.first().copied().unwrap_or(group[0]);
            let col = |f: fn(&StudyRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let within: Vec<bool> = ok.iter().filter_map(|r| Some(r.posterior_mean_l2? <= r.l2_reference?)).collect();
            let size: Vec<bool> = ok.iter().filter_map(|r| Some(r.size_clause? > 0.95)).collect();
            GridAggregate {
                study: first.study,
                grid_index: g,
                n: first.n,
                p: first.p,
                s: first.s,
                arm,
                replications: ok.len(),
                errors: group.len() - ok.len(),
                lambda: first.lambda,
                epsilon_n: first.epsilon_n,
                r_n: first.r_n,
                rate_below_one: first.rate_below_one,
                median_posterior_mean_l2: median(&col(|r| r.posterior_mean_l2)),
                l2_reference: first.l2_reference,
                within_l2_reference: share(&within),
                mean_prob_true_model: mean(&col(|r| r.prob_true_model)),
                mean_theta_hat: mean(&col(|r| r.theta_hat)),
                mean_theta_tilde: mean(&col(|r| r.theta_tilde)),
                mean_size_clause: mean(&col(|r| r.size_clause)),
                size_clause_above_095: share(&size),
            }
        })
        .collect()
}

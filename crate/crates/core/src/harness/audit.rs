use serde::Serialize;

use super::config::{ExperimentConfig, Study};
use super::study::design_seed;
use crate::eigen::{eigen_report, united_eigenvalue, EigenOptions};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::model::{generate_instance, CoefficientSpec, ProblemInstance};
use crate::priors::audit_assumption1;
use crate::rng::derive_seed;

/// Numerical floor below which a united eigenvalue counts as zero.
pub const LAMBDA_FLOOR: f64 = 1e-10;

/// One check of the prior audit, in long format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorAuditRow {
    pub grid_index: usize,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub design_seed: u64,
    pub check: &'static str,
    pub t: Option<usize>,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub holds: Option<bool>,
    pub status: &'static str,
    pub error: String,
}

/// Eigenvalue functionals of one design at one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenAuditRow {
    pub grid_index: usize,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub design_seed: u64,
    pub t: usize,
    pub muev: Option<f64>,
    pub muev_witness: String,
    pub msev: Option<f64>,
    pub mnev: Option<f64>,
    pub mrev: Option<f64>,
    pub mrev_method: Option<&'static str>,
    pub mrev_slack: Option<f64>,
    pub mnev_premise: Option<bool>,
    pub muev_ge_msev: Option<bool>,
    pub msev_ge_mrev: Option<bool>,
    pub muev_ge_mnev: Option<bool>,
    /// `MUEV((K+1)s)`.
    pub lambda: Option<f64>,
    pub lambda_method: Option<&'static str>,
    /// `lambda > 0` up to the numerical floor.
    pub assumption2: Option<bool>,
    pub status: &'static str,
    pub error: String,
}

fn audit_design(cfg: &ExperimentConfig, g: usize) -> Result<ProblemInstance> {
    let pt = cfg.grid[g];
    let unit = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
    generate_instance(pt.n, pt.p, pt.s, &unit, cfg.sigma_star, cfg.design, design_seed(cfg.seed, g))
}

fn prior_rows(cfg: &ExperimentConfig, g: usize) -> Vec<PriorAuditRow> {
    let pt = cfg.grid[g];
    let row = |check, t, value, reference, holds| PriorAuditRow {
        grid_index: g,
        n: pt.n,
        p: pt.p,
        s: pt.s,
        design_seed: design_seed(cfg.seed, g),
        check,
        t,
        value,
        reference,
        holds,
        status: "ok",
        error: String::new(),
    };
    let t_max = cfg.audit.t_max.unwrap_or((pt.s + cfg.constants.overfit_cap(pt.s)).max(1)).min(pt.p);
    let d = match audit_design(cfg, g).and_then(|inst| audit_assumption1(&cfg.prior, &inst, &cfg.constants, t_max)) {
        Ok(d) => d,
        Err(e) => {
            return vec![PriorAuditRow {
                status: "error",
                error: e.to_string(),
                ..row("audit", None, None, None, None)
            }]
        }
    };
    let mut rows = vec![
        row("z0n", None, Some(d.z0n), None, None),
        row("z1n", None, Some(d.z1n), None, None),
        row("sup-density", None, Some(d.sup_density), None, None),
        row("pi-empty", None, Some(d.pi_empty), None, None),
        row(
            "variance-positive",
            None,
            Some(d.variance_positive.value),
            Some(d.variance_positive.reference),
            Some(d.variance_positive.holds),
        ),
        row("pi-true", None, Some(d.pi_true_check.value), Some(d.pi_true_check.reference), Some(d.pi_true_check.holds)),
    ];
    for t in &d.tails {
        rows.push(row("tail", Some(t.t), Some(t.tail), Some(t.bound), Some(t.holds)));
    }
    rows.push(row(
        "spike-ratio",
        None,
        Some(d.spike_ratio.value),
        Some(d.spike_ratio.reference),
        Some(d.spike_ratio.holds),
    ));
    rows.push(row("slab", None, Some(d.slab_check.value), Some(d.slab_check.reference), Some(d.slab_check.holds)));
    let pr = d.premises;
    rows.push(row("premise-contraction", None, None, None, Some(pr.contraction_premise)));
    rows.push(row("premise-m12", None, None, Some(pr.m12_threshold), Some(pr.m12_premise)));
    rows.push(row("premise-m3", None, None, Some(pr.m3_threshold), Some(pr.m3_premise)));
    rows
}

fn eigen_rows(cfg: &ExperimentConfig, g: usize) -> Vec<EigenAuditRow> {
    let pt = cfg.grid[g];
    let blank = |t| EigenAuditRow {
        grid_index: g,
        n: pt.n,
        p: pt.p,
        s: pt.s,
        design_seed: design_seed(cfg.seed, g),
        t,
        muev: None,
        muev_witness: String::new(),
        msev: None,
        mnev: None,
        mrev: None,
        mrev_method: None,
        mrev_slack: None,
        mnev_premise: None,
        muev_ge_msev: None,
        msev_ge_mrev: None,
        muev_ge_mnev: None,
        lambda: None,
        lambda_method: None,
        assumption2: None,
        status: "ok",
        error: String::new(),
    };
    let fail = |t, e: String| EigenAuditRow { status: "error", error: e, ..blank(t) };
    let lambda_order = (pt.s + cfg.constants.overfit_cap(pt.s)).clamp(1, pt.p);
    let orders = if cfg.audit.orders.is_empty() { vec![lambda_order] } else { cfg.audit.orders.clone() };
    let inst = match audit_design(cfg, g) {
        Ok(i) => i,
        Err(e) => return orders.iter().map(|&t| fail(t, e.to_string())).collect(),
    };
    let xi_star = inst.truth.as_ref().map(|t| t.xi_star.clone()).unwrap_or_default();
    let cap = cfg.audit.cap as u128;
    let lambda = united_eigenvalue(
        &inst.x,
        &xi_star,
        lambda_order,
        cap,
        derive_seed(cfg.seed, &[2, g as u64]),
        Exec::Sequential,
    );
    let opts = EigenOptions { alpha: cfg.audit.alpha, mrev: cfg.audit.mrev, cap, exec: Exec::Sequential };
    orders
        .iter()
        .map(|&t| {
            let mut row = blank(t);
            match &lambda {
                Ok(l) => {
                    row.lambda = Some(l.value);
                    row.lambda_method = Some(l.method.tag());
                    row.assumption2 = Some(l.value > LAMBDA_FLOOR);
                }
                Err(e) => return fail(t, format!("lambda: {e}")),
            }
            match eigen_report(&inst.x, &xi_star, t, &opts) {
                Ok(r) => {
                    row.muev = Some(r.muev.value);
                    row.muev_witness = r.muev.witness.one_based_joined(" ");
                    row.msev = Some(r.msev.value);
                    row.mnev = Some(r.mnev.value);
                    row.mrev = Some(r.mrev.value);
                    row.mrev_method = Some(r.mrev.method);
                    row.mrev_slack = r.mrev.slack;
                    row.mnev_premise = Some(r.premise.holds);
                    row.muev_ge_msev = Some(r.muev_ge_msev);
                    row.msev_ge_mrev = r.msev_ge_mrev;
                    row.muev_ge_mnev = r.muev_ge_mnev;
                }
                Err(e) => {
                    row.status = "error";
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect()
}

/// Prior audit rows for every grid point.
pub fn run_prior_audit(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<PriorAuditRow>> {
    if cfg.study != Study::AuditPrior {
        return invalid(format!("expected an audit-prior study, got {}", cfg.study.tag()));
    }
    cfg.validate()?;
    Ok(exec.map_range(cfg.grid.len(), |g| prior_rows(cfg, g)).into_iter().flatten().collect())
}

/// Eigenvalue audit rows for every grid point and order.
pub fn run_eigen_audit(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<EigenAuditRow>> {
    if cfg.study != Study::AuditEigen {
        return invalid(format!("expected an audit-eigen study, got {}", cfg.study.tag()));
    }
    cfg.validate()?;
    Ok(exec.map_range(cfg.grid.len(), |g| eigen_rows(cfg, g)).into_iter().flatten().collect())
}

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::PosteriorSummary;

/// Version of the [`StudyRow`] column set.
pub const STUDY_ROW_VERSION: u32 = 1;

/// One replication of a contraction or selection study.
///
/// Columns are fixed by the committed schema file; timing lives in the run
/// manifest so that rows are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub study: &'static str,
    pub grid_index: usize,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub arm: &'static str,
    pub replication: usize,
    /// Seed of the design draw shared by all replications of a grid point.
    pub design_seed: u64,
    /// Seed of this replication's noise, sampler and summary streams.
    pub seed: u64,
    pub signal: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_method: Option<&'static str>,
    pub epsilon_n: Option<f64>,
    pub beta_min: Option<f64>,
    pub r_n: Option<f64>,
    pub rate_below_one: Option<bool>,
    pub inference: Option<&'static str>,
    pub prob_true_model: Option<f64>,
    pub sigma_clause: Option<f64>,
    pub size_clause: Option<f64>,
    pub supset_clause: Option<f64>,
    pub spike_clause: Option<f64>,
    pub l2_clause: Option<f64>,
    pub l2_model_clause: Option<f64>,
    pub theta_hat: Option<f64>,
    pub theta_hat_supset: Option<f64>,
    pub theta_tilde: Option<f64>,
    pub mean_model_size: Option<f64>,
    pub mean_l2_error: Option<f64>,
    pub posterior_mean_l2: Option<f64>,
    /// `3 sigma* eps_n / sqrt(lambda)`.
    pub l2_reference: Option<f64>,
    pub radius: Option<f64>,
    pub sigma_lo: Option<f64>,
    pub sigma_hi: Option<f64>,
    pub overfit_cap: Option<usize>,
    pub draws: Option<usize>,
    pub ess: Option<f64>,
    pub acceptance: Option<f64>,
    pub status: &'static str,
    pub error: String,
}

/// Coordinates of a row before any result is known.
#[derive(Debug, Clone, Copy)]
pub struct RowKey {
    pub study: &'static str,
    pub grid_index: usize,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub arm: &'static str,
    pub replication: usize,
    pub design_seed: u64,
    pub seed: u64,
}

impl StudyRow {
    pub fn blank(k: RowKey) -> Self {
        Self {
            study: k.study,
            grid_index: k.grid_index,
            n: k.n,
            p: k.p,
            s: k.s,
            arm: k.arm,
            replication: k.replication,
            design_seed: k.design_seed,
            seed: k.seed,
            signal: None,
            lambda: None,
            lambda_method: None,
            epsilon_n: None,
            beta_min: None,
            r_n: None,
            rate_below_one: None,
            inference: None,
            prob_true_model: None,
            sigma_clause: None,
            size_clause: None,
            supset_clause: None,
            spike_clause: None,
            l2_clause: None,
            l2_model_clause: None,
            theta_hat: None,
            theta_hat_supset: None,
            theta_tilde: None,
            mean_model_size: None,
            mean_l2_error: None,
            posterior_mean_l2: None,
            l2_reference: None,
            radius: None,
            sigma_lo: None,
            sigma_hi: None,
            overfit_cap: None,
            draws: None,
            ess: None,
            acceptance: None,
            status: "ok",
            error: String::new(),
        }
    }

    pub fn failed(k: RowKey, message: impl Into<String>) -> Self {
        Self { status: "error", error: message.into(), ..Self::blank(k) }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn fill_summary(&mut self, s: &PosteriorSummary) {
        self.prob_true_model = Some(s.prob_true_model);
        self.sigma_clause = Some(s.sigma_clause);
        self.size_clause = Some(s.size_clause);
        self.supset_clause = Some(s.supset_clause);
        self.spike_clause = Some(s.spike_clause);
        self.l2_clause = Some(s.l2_clause);
        self.l2_model_clause = Some(s.l2_model_clause);
        self.theta_hat = Some(s.theta_hat);
        self.theta_hat_supset = Some(s.theta_hat_supset);
        self.theta_tilde = Some(s.theta_tilde);
        self.mean_model_size = Some(s.mean_model_size);
        self.mean_l2_error = Some(s.mean_l2_error);
        self.radius = Some(s.radius);
        self.sigma_lo = Some(s.sigma_lo);
        self.sigma_hi = Some(s.sigma_hi);
        self.overfit_cap = Some(s.overfit_cap);
        self.draws = Some(s.draws);
        self.ess = s.ess;
    }
}

/// Header line of the current [`StudyRow`] schema.
pub fn study_row_header() -> String {
    let k = RowKey { study: "", grid_index: 0, n: 0, p: 0, s: 0, arm: "", replication: 0, design_seed: 0, seed: 0 };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(StudyRow::blank(k)).expect("row serializes");
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("utf8").lines().next().unwrap_or_default().to_string()
}

/// Write serializable records as headered CSV.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

//! Local eigenvalue functionals of the design: united (MUEV), sparse (MSEV),
//! non-zero (MNEV) and restricted (MREV) minimum eigenvalues, the ordering
//! between them, and the Schur-complement bound.

mod enumerate;
mod mrev;
mod schur;
mod search;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::ModelIndex;

pub use enumerate::{mnev, mnev_premise, msev, muev, subset_count, Extremum, PremiseCheck, DEFAULT_CAP};
pub use mrev::{cone_feasible, mrev, mrev_sparse_restricted, MrevEstimate, MrevMethod, DENSE_GRID_MAX_P};
pub use schur::{schur_bound_check, SchurCheck};
pub use search::muev_search;

/// Tolerance for the exact orderings between functionals.
pub const ORDER_TOL: f64 = 1e-9;

/// All four functionals of one order with their ordering verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenReport {
    pub t: usize,
    pub muev: Extremum,
    pub msev: Extremum,
    pub mnev: Extremum,
    pub mrev: MrevEstimate,
    pub premise: PremiseCheck,
    /// `MUEV >= MSEV`
    pub muev_ge_msev: bool,
    /// `MSEV >= MREV - slack`; only asserted for the dense grid.
    pub msev_ge_mrev: Option<bool>,
    /// `MUEV >= MNEV`, meaningful only when the premise holds.
    pub muev_ge_mnev: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub alpha: f64,
    pub mrev: MrevMethod,
    pub cap: u128,
    pub exec: Exec,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { alpha: 1.0, mrev: MrevMethod::DenseGrid, cap: DEFAULT_CAP, exec: Exec::default() }
    }
}

pub fn eigen_report(x: &DMatrix<f64>, xi_star: &ModelIndex, t: usize, opts: &EigenOptions) -> Result<EigenReport> {
    let u = muev(x, xi_star, t, opts.cap, opts.exec)?;
    let s = msev(x, t, opts.cap, opts.exec)?;
    let nz = mnev(x, t, opts.cap, opts.exec)?;
    let method = match opts.mrev {
        MrevMethod::DenseGrid if x.ncols() > DENSE_GRID_MAX_P => MrevMethod::Randomized { restarts: 32, seed: 0 },
        m => m,
    };
    let r = mrev(x, t, opts.alpha, method, opts.exec)?;
    let premise = mnev_premise(x, xi_star, t, opts.cap, opts.exec)?;
    let muev_ge_msev = u.value >= s.value - ORDER_TOL;
    let msev_ge_mrev = r.slack.map(|slack| s.value >= r.value - slack);
    let muev_ge_mnev = premise.holds.then_some(u.value >= nz.value - ORDER_TOL);
    Ok(EigenReport { t, muev: u, msev: s, mnev: nz, mrev: r, premise, muev_ge_msev, msev_ge_mrev, muev_ge_mnev })
}

/// How a united eigenvalue was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMethod {
    Exact,
    /// Local search; an upper bound on the exact value.
    Search,
}

impl LambdaMethod {
    pub fn tag(self) -> &'static str {
        match self {
            LambdaMethod::Exact => "exact",
            LambdaMethod::Search => "search",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitedEigenvalue {
    pub value: f64,
    pub witness: ModelIndex,
    pub method: LambdaMethod,
}

/// `MUEV(t)`, exactly when the enumeration fits in `cap` and by local
/// search otherwise.
pub fn united_eigenvalue(
    x: &DMatrix<f64>,
    xi_star: &ModelIndex,
    t: usize,
    cap: u128,
    seed: u64,
    exec: Exec,
) -> Result<UnitedEigenvalue> {
    match muev(x, xi_star, t, cap, exec) {
        Ok(e) => Ok(UnitedEigenvalue { value: e.value, witness: e.witness, method: LambdaMethod::Exact }),
        Err(Error::BudgetExceeded { .. }) => {
            let e = muev_search(x, xi_star, t, 4, seed, exec)?;
            Ok(UnitedEigenvalue { value: e.value, witness: e.witness, method: LambdaMethod::Search })
        }
        Err(e) => Err(e),
    }
}

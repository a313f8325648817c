//! Depth-first subset enumeration with an incrementally grown QR factor.
//!
//! Subsets are visited in lexicographic order of their sorted member lists,
//! one partition per leading element. Each partition owns its factor and
//! reports its own best candidate; the global answer is the minimum value
//! with ties broken by the lexicographically smallest witness, so the result
//! does not depend on how partitions are scheduled.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::linalg::{columns, rank_tolerance, singular_values_and_rank, IncrementalQr};
use crate::model::ModelIndex;

/// Default cap on the number of subsets a single functional may visit.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// A minimum with the subset attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub witness: ModelIndex,
}

impl Extremum {
    fn better_than(&self, other: &Extremum) -> bool {
        match self.value.total_cmp(&other.value) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.witness.members() < other.witness.members(),
        }
    }
}

fn reduce(found: impl IntoIterator<Item = Option<Extremum>>) -> Option<Extremum> {
    found.into_iter().flatten().fold(None, |best, c| match best {
        Some(b) if !c.better_than(&b) => Some(b),
        _ => Some(c),
    })
}

/// `sum_{k=lo}^{hi} C(m, k)`, saturating.
pub fn subset_count(m: usize, lo: usize, hi: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for k in 0..=hi.min(m) {
        if k > 0 {
            c = c.saturating_mul((m - k + 1) as u128) / k as u128;
        }
        if k >= lo {
            total = total.saturating_add(c);
        }
    }
    total
}

pub(crate) fn check_budget(required: u128, cap: u128) -> Result<()> {
    if required > cap {
        return Err(Error::BudgetExceeded { required, cap });
    }
    Ok(())
}

enum Step {
    Descend,
    Prune,
    Stop,
}

/// Shared read-only state for one enumeration.
pub(crate) struct Enumeration<'a> {
    cols: Vec<DVector<f64>>,
    candidates: &'a [usize],
    max_size: usize,
    base: &'a [usize],
}

impl<'a> Enumeration<'a> {
    pub(crate) fn new(x: &DMatrix<f64>, candidates: &'a [usize], max_size: usize, base: &'a [usize]) -> Self {
        let cols = (0..x.ncols()).map(|j| x.column(j).clone_owned()).collect();
        Self { cols, candidates, max_size, base }
    }

    fn fresh_qr(&self) -> IncrementalQr {
        let mut qr = IncrementalQr::new(self.cols.first().map_or(0, |c| c.len()));
        for &j in self.base {
            qr.push(&self.cols[j]);
        }
        qr
    }

    /// Visit every nonempty subset whose smallest candidate position is
    /// `lead`, in lexicographic order.
    fn partition<F>(&self, lead: usize, visit: &mut F)
    where
        F: FnMut(&[usize], &IncrementalQr) -> Step,
    {
        if self.max_size == 0 {
            return;
        }
        let mut qr = self.fresh_qr();
        let mut path = Vec::with_capacity(self.max_size);
        self.descend(lead, &mut qr, &mut path, visit);
    }

    fn descend<F>(&self, pos: usize, qr: &mut IncrementalQr, path: &mut Vec<usize>, visit: &mut F) -> bool
    where
        F: FnMut(&[usize], &IncrementalQr) -> Step,
    {
        let j = self.candidates[pos];
        qr.push(&self.cols[j]);
        path.push(j);
        let mut keep_going = true;
        match visit(path, qr) {
            Step::Stop => keep_going = false,
            Step::Prune => {}
            Step::Descend => {
                if path.len() < self.max_size {
                    for next in pos + 1..self.candidates.len() {
                        if !self.descend(next, qr, path, visit) {
                            keep_going = false;
                            break;
                        }
                    }
                }
            }
        }
        path.pop();
        qr.pop();
        keep_going
    }

    pub(crate) fn column(&self, j: usize) -> &DVector<f64> {
        &self.cols[j]
    }
}

/// Smallest eigenvalue of `A'A/n` from the triangular factor.
fn lambda_min_from_qr(qr: &IncrementalQr, n: usize) -> f64 {
    let sv = qr.singular_values();
    let smin = sv.last().copied().unwrap_or(0.0);
    smin * smin / n as f64
}

/// Smallest nonzero eigenvalue of `X_xi'X_xi/n` by a direct SVD.
fn lambda_min_nonzero(x: &DMatrix<f64>, members: &[usize]) -> Option<f64> {
    let sub = columns(x, &ModelIndex::from_sorted_unchecked(members.to_vec()));
    let (sv, rank) = singular_values_and_rank(&sub);
    (rank > 0).then(|| sv[rank - 1] * sv[rank - 1] / x.nrows() as f64)
}

fn validate_t(x: &DMatrix<f64>, t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("order t must be at least 1".into()));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    Ok(())
}

/// Minimum united eigenvalue: the smallest `lambda_min` of the normalized
/// Gram of `xi ∪ xi*` over full-rank `xi` with `|xi ∪ xi*| <= t`. The
/// witness is `xi \ xi*`, itself a full-rank model attaining the union.
pub fn muev(x: &DMatrix<f64>, xi_star: &ModelIndex, t: usize, cap: u128, exec: Exec) -> Result<Extremum> {
    validate_t(x, t)?;
    let p = x.ncols();
    xi_star.check_within(p)?;
    let s = xi_star.len();
    if t < s {
        return Err(Error::InvalidArgument(format!("muev needs t >= |xi*| (t={t}, s={s})")));
    }
    let info = crate::model::is_full_rank(x, xi_star);
    if !info.full_rank {
        return Err(Error::RankDeficient { model: xi_star.to_string(), rank: info.rank, size: s });
    }
    let extra = t - s;
    check_budget(subset_count(p - s, 0, extra), cap)?;
    let n = x.nrows();
    let comp = xi_star.complement(p);
    let en = Enumeration::new(x, &comp, extra.min(comp.len()), xi_star.members());

    let base = (s > 0).then(|| Extremum { value: lambda_min_from_qr(&en.fresh_qr(), n), witness: ModelIndex::empty() });
    let parts = exec.map_range(comp.len(), |lead| {
        let mut best: Option<Extremum> = None;
        en.partition(lead, &mut |e: &[usize], qr: &IncrementalQr| {
            if qr.deficient() == 0 {
                let c = Extremum {
                    value: lambda_min_from_qr(qr, n),
                    witness: ModelIndex::from_sorted_unchecked(e.to_vec()),
                };
                if best.as_ref().is_none_or(|b| c.better_than(b)) {
                    best = Some(c);
                }
                return Step::Descend;
            }
            if !crate::model::is_full_rank(x, &ModelIndex::from_sorted_unchecked(e.to_vec())).full_rank {
                // every superset of a rank-deficient E is rank deficient too
                return Step::Prune;
            }
            best = Some(Extremum { value: 0.0, witness: ModelIndex::from_sorted_unchecked(e.to_vec()) });
            Step::Stop
        });
        best
    });
    reduce(std::iter::once(base).chain(parts))
        .ok_or_else(|| Error::InvalidArgument("no admissible model for muev".into()))
}

/// Minimum sparse eigenvalue over all `1 <= |xi| <= t`, rank-deficient
/// models contributing 0.
pub fn msev(x: &DMatrix<f64>, t: usize, cap: u128, exec: Exec) -> Result<Extremum> {
    validate_t(x, t)?;
    let p = x.ncols();
    let t = t.min(p);
    check_budget(subset_count(p, 1, t), cap)?;
    let n = x.nrows();
    let all: Vec<usize> = (0..p).collect();
    let en = Enumeration::new(x, &all, t, &[]);
    let parts = exec.map_range(p, |lead| {
        let mut best: Option<Extremum> = None;
        en.partition(lead, &mut |xi: &[usize], qr: &IncrementalQr| {
            let value = if qr.deficient() > 0 { 0.0 } else { lambda_min_from_qr(qr, n) };
            let c = Extremum { value, witness: ModelIndex::from_sorted_unchecked(xi.to_vec()) };
            if best.as_ref().is_none_or(|b| c.better_than(b)) {
                best = Some(c);
            }
            if value == 0.0 {
                Step::Stop
            } else {
                Step::Descend
            }
        });
        best
    });
    reduce(parts).ok_or_else(|| Error::InvalidArgument("no model for msev".into()))
}

/// Minimum over `1 <= |xi| <= t` of the smallest nonzero eigenvalue of
/// `X_xi'X_xi/n`.
pub fn mnev(x: &DMatrix<f64>, t: usize, cap: u128, exec: Exec) -> Result<Extremum> {
    validate_t(x, t)?;
    let p = x.ncols();
    let t = t.min(p);
    check_budget(subset_count(p, 1, t), cap)?;
    let n = x.nrows();
    let all: Vec<usize> = (0..p).collect();
    let en = Enumeration::new(x, &all, t, &[]);
    let parts = exec.map_range(p, |lead| {
        let mut best: Option<Extremum> = None;
        en.partition(lead, &mut |xi: &[usize], qr: &IncrementalQr| {
            let value = if qr.deficient() > 0 { lambda_min_nonzero(x, xi) } else { Some(lambda_min_from_qr(qr, n)) };
            if let Some(value) = value {
                let c = Extremum { value, witness: ModelIndex::from_sorted_unchecked(xi.to_vec()) };
                if best.as_ref().is_none_or(|b| c.better_than(b)) {
                    best = Some(c);
                }
            }
            Step::Descend
        });
        best
    });
    reduce(parts).ok_or_else(|| Error::InvalidArgument("design has no nonzero column".into()))
}

/// Outcome of the MNEV premise check: `holds` unless some `xi ⊉ xi*` with
/// `|xi| <= t` absorbs `X_{xi*}` into its column span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PremiseCheck {
    pub holds: bool,
    /// Smallest residual Frobenius norm seen, with its model.
    pub min_residual: f64,
    pub witness: Option<ModelIndex>,
}

fn residual_norm(en: &Enumeration<'_>, qr_basis: &[DVector<f64>], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for &j in targets {
        let mut r = en.column(j).clone();
        for _ in 0..2 {
            for q in qr_basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        total += r.norm_squared();
    }
    total.sqrt()
}

/// `(I - P_xi) X_{xi*} != 0` for every `xi ⊉ xi*` with `|xi| <= t`.
pub fn mnev_premise(x: &DMatrix<f64>, xi_star: &ModelIndex, t: usize, cap: u128, exec: Exec) -> Result<PremiseCheck> {
    let p = x.ncols();
    xi_star.check_within(p)?;
    if xi_star.is_empty() {
        return Ok(PremiseCheck { holds: true, min_residual: f64::INFINITY, witness: None });
    }
    let t = t.min(p);
    check_budget(subset_count(p, 0, t), cap)?;
    let n = x.nrows();
    let s = xi_star.len();
    let scale = xi_star.members().iter().map(|&j| x.column(j).norm()).fold(0.0, f64::max);
    let tol = rank_tolerance(scale * ((t + s) as f64).sqrt(), n, t + s);
    let all: Vec<usize> = (0..p).collect();
    let en = Enumeration::new(x, &all, t, &[]);
    let targets = xi_star.members();

    let empty = residual_norm(&en, &[], targets);
    let mut found = vec![Some(Extremum { value: empty, witness: ModelIndex::empty() })];
    found.extend(exec.map_range(p, |lead| {
        let mut best: Option<Extremum> = None;
        en.partition(lead, &mut |xi: &[usize], qr: &IncrementalQr| {
            let model = ModelIndex::from_sorted_unchecked(xi.to_vec());
            if model.is_superset_of(xi_star) {
                return Step::Descend;
            }
            let r = residual_norm(&en, qr.basis(), targets);
            let c = Extremum { value: r, witness: model };
            if best.as_ref().is_none_or(|b| c.better_than(b)) {
                best = Some(c);
            }
            if r <= tol {
                Step::Stop
            } else {
                Step::Descend
            }
        });
        best
    }));
    let best = reduce(found).expect("empty model always contributes");
    let holds = best.value > tol;
    Ok(PremiseCheck { holds, min_residual: best.value, witness: (!holds).then_some(best.witness) })
}

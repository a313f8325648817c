//! Restricted eigenvalue estimates.
//!
//! The cone `||b_{xi^c}||_1 <= alpha ||b_xi||_1`, minimized over `|xi| <= t`,
//! is the set of `b` whose `p - t` smallest magnitudes sum to at most `alpha`
//! times the `t` largest. The infimum of the Rayleigh quotient over that set
//! is not convex, so every value returned here is the quotient at a feasible
//! point and hence an upper bound on the true infimum.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::enumerate::{check_budget, subset_count, Extremum};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::model::linalg::max_eigenvalue;
use crate::model::ModelIndex;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MrevMethod {
    /// Hyperspherical grid on the half sphere, local polishing of the best
    /// grid points and a search over the faces of the cone; `p <= 6` only.
    DenseGrid,
    Randomized {
        restarts: usize,
        seed: u64,
    },
}

impl MrevMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            MrevMethod::DenseGrid => "dense-grid",
            MrevMethod::Randomized { .. } => "randomized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrevEstimate {
    pub value: f64,
    pub method: &'static str,
    /// Angular grid spacing in degrees (dense grid only).
    pub resolution_deg: Option<f64>,
    pub grid_points: Option<u64>,
    /// `lambda_max(G) (p - 1) h`, the discretization allowance (dense grid).
    pub slack: Option<f64>,
    pub argmin: Vec<f64>,
}

/// Largest dimension the dense grid accepts.
pub const DENSE_GRID_MAX_P: usize = 6;
const TARGET_RESOLUTION_DEG: f64 = 2.0;
const GRID_POINT_CAP: u64 = 20_000_000;
const POLISH_POINTS: usize = 16;
const MAX_ITER: usize = 4000;

fn quotient(g: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    (b.transpose() * g * b)[(0, 0)] / b.norm_squared()
}

/// Top-`t` membership by magnitude, ties to the lower index.
fn top_set(b: &DVector<f64>, t: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b[j].abs().total_cmp(&b[i].abs()).then(i.cmp(&j)));
    let mut top = vec![false; b.len()];
    for &i in order.iter().take(t) {
        top[i] = true;
    }
    top
}

/// `(sum of the t largest |b_j|, sum of the rest)`.
fn split_l1(b: &[f64], t: usize) -> (f64, f64) {
    let mut mags: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, c| c.total_cmp(a));
    let top: f64 = mags.iter().take(t).sum();
    let rest: f64 = mags.iter().skip(t).sum();
    (top, rest)
}

pub fn cone_feasible(b: &[f64], t: usize, alpha: f64) -> bool {
    let (top, rest) = split_l1(b, t);
    rest <= alpha * top * (1.0 + 1e-12)
}

/// Scale the coordinates outside the top-`t` set just enough to enter the
/// cone, then normalize.
fn retract(b: &DVector<f64>, t: usize, alpha: f64) -> DVector<f64> {
    let top = top_set(b, t);
    let (mut on, mut off) = (0.0, 0.0);
    for (j, v) in b.iter().enumerate() {
        if top[j] {
            on += v.abs();
        } else {
            off += v.abs();
        }
    }
    let mut out = b.clone();
    if off > alpha * on {
        let c = alpha * on / off;
        for j in 0..out.len() {
            if !top[j] {
                out[j] *= c;
            }
        }
    }
    let norm = out.norm();
    out / norm
}

fn apply_mask(b: &mut DVector<f64>, mask: Option<&[bool]>) {
    if let Some(mask) = mask {
        for j in 0..b.len() {
            if !mask[j] {
                b[j] = 0.0;
            }
        }
    }
}

/// Minimizer of the quotient on `span{b, d}` for unit `b` and unit `d ⟂ b`,
/// as an angle from `b`.
fn best_angle(g: &DMatrix<f64>, b: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let gb = g * b;
    let gd = g * d;
    let m = Matrix2::new(b.dot(&gb), b.dot(&gd), d.dot(&gb), d.dot(&gd));
    let eig = m.symmetric_eigen();
    let k = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let (c1, c2) = (eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]);
    let (c1, c2) = if c1 < 0.0 { (-c1, -c2) } else { (c1, c2) };
    c2.atan2(c1)
}

/// Steepest descent on the sphere with exact two-dimensional line search,
/// retraction into the cone and backtracking. `mask`, when given, pins the
/// unmasked coordinates to zero.
fn descend(g: &DMatrix<f64>, start: DVector<f64>, t: usize, alpha: f64, mask: Option<&[bool]>) -> (f64, DVector<f64>) {
    let p = start.len();
    let mut b = start;
    apply_mask(&mut b, mask);
    b = retract(&b, t, alpha);
    let mut q = quotient(g, &b);
    for _ in 0..MAX_ITER {
        let gb = g * &b;
        let mut grad = &gb - &b * q;
        apply_mask(&mut grad, mask);
        let gnorm = grad.norm();
        if gnorm < 1e-13 {
            break;
        }
        let mut dirs = vec![-grad / gnorm];
        // tangent to the active cone boundary, if any
        let top = top_set(&b, t);
        let (on, off): (f64, f64) =
            (0..p).fold((0.0, 0.0), |(a, c), j| if top[j] { (a + b[j].abs(), c) } else { (a, c + b[j].abs()) });
        if off >= alpha * on * (1.0 - 1e-9) && off > 0.0 {
            let mut a = DVector::from_fn(p, |j, _| if top[j] { -alpha * b[j].signum() } else { b[j].signum() });
            apply_mask(&mut a, mask);
            a -= &b * b.dot(&a);
            let an = a.norm();
            if an > 1e-12 {
                let a = a / an;
                let mut d = dirs[0].clone();
                d -= &a * a.dot(&d);
                d -= &b * b.dot(&d);
                let dn = d.norm();
                if dn > 1e-12 {
                    dirs.push(d / dn);
                }
            }
        }
        let mut best: Option<(f64, DVector<f64>)> = None;
        for d in &dirs {
            let mut theta = best_angle(g, &b, d);
            for _ in 0..40 {
                let mut cand = &b * theta.cos() + d * theta.sin();
                apply_mask(&mut cand, mask);
                let cand = retract(&cand, t, alpha);
                let qc = quotient(g, &cand);
                if qc < q - 1e-15 * q.abs().max(1.0) {
                    if best.as_ref().is_none_or(|(bq, _)| qc < *bq) {
                        best = Some((qc, cand));
                    }
                    break;
                }
                theta *= 0.5;
            }
        }
        match best {
            Some((qc, cand)) => {
                let gain = q - qc;
                q = qc;
                b = cand;
                if gain < 1e-14 * q.abs().max(1.0) {
                    break;
                }
            }
            None => break,
        }
    }
    (q, b)
}

/// Grid size `m` (angular step `pi/m`) for dimension `p`: the finest step up
/// to the target resolution that keeps the point count under the cap.
fn grid_steps(p: usize) -> (usize, u64) {
    let count = |m: usize| -> u64 {
        if p == 1 {
            1
        } else {
            ((m + 1) as u64).saturating_pow((p - 2) as u32).saturating_mul(m as u64)
        }
    };
    let mut m = (180.0 / TARGET_RESOLUTION_DEG).round() as usize;
    while m > 2 && count(m) > GRID_POINT_CAP {
        m -= 1;
    }
    (m, count(m))
}

#[derive(Clone)]
struct GridHit {
    value: f64,
    index: u64,
    beta: Vec<f64>,
}

fn keep_best(best: &mut Vec<GridHit>, hit: GridHit) {
    if best.len() == POLISH_POINTS && hit.value >= best[POLISH_POINTS - 1].value {
        return;
    }
    let pos = best.partition_point(|h| (h.value, h.index) < (hit.value, hit.index));
    best.insert(pos, hit);
    best.truncate(POLISH_POINTS);
}

/// Walk the grid points whose first angle has index `i0`.
fn grid_slice(g: &DMatrix<f64>, p: usize, m: usize, i0: usize, t: usize, alpha: f64) -> Vec<GridHit> {
    let step = std::f64::consts::PI / m as f64;
    let inner = p - 2;
    // angle indices: phi_1..phi_{p-2} in [0, pi] (m+1 values), phi_{p-1} in [0, pi) (m values)
    let mut idx = vec![0usize; p - 1];
    idx[0] = i0;
    let mut best = Vec::with_capacity(POLISH_POINTS + 1);
    let mut beta = vec![0.0; p];
    let per_slice: u64 = if p == 2 { 1 } else { ((m + 1) as u64).pow((inner - 1) as u32) * m as u64 };
    let mut counter = 0u64;
    loop {
        let mut sin_prod = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            let phi = i as f64 * step;
            beta[k] = sin_prod * phi.cos();
            sin_prod *= phi.sin();
        }
        beta[p - 1] = sin_prod;
        if cone_feasible(&beta, t, alpha) {
            let mut v = 0.0;
            for i in 0..p {
                let mut row = 0.0;
                for j in 0..p {
                    row += g[(i, j)] * beta[j];
                }
                v += beta[i] * row;
            }
            keep_best(&mut best, GridHit { value: v, index: i0 as u64 * per_slice + counter, beta: beta.clone() });
        }
        counter += 1;
        // odometer over idx[1..], last digit has m values, others m+1
        let mut k = p - 2;
        loop {
            if k == 0 {
                return best;
            }
            let limit = if k == p - 2 { m } else { m + 1 };
            idx[k] += 1;
            if idx[k] < limit {
                break;
            }
            idx[k] = 0;
            k -= 1;
        }
    }
}

/// Smallest eigenpair of `basis^T G basis`, mapped back through `basis`.
fn restricted_min(g: &DMatrix<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    let m = basis.transpose() * g * basis;
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    basis * eig.eigenvectors.column(k)
}

/// Face candidates of the cone. The cone is a union of polyhedral cones
/// (one per top set and sign pattern), and on each face the quotient is
/// minimized by the smallest eigenvector of `G` restricted to the face's
/// span. Every feasible such eigenvector is a candidate; this reaches
/// minimizers that descent stalls short of at the kinks of the boundary.
fn face_search(g: &DMatrix<f64>, t: usize, alpha: f64) -> (f64, DVector<f64>) {
    let p = g.nrows();
    let mut best = (f64::INFINITY, DVector::zeros(p));
    let mut consider = |v: DVector<f64>| {
        let norm = v.norm();
        if norm > 0.0 && cone_feasible(v.as_slice(), t, alpha) {
            let v = v / norm;
            let q = quotient(g, &v);
            if q < best.0 {
                best = (q, v);
            }
        }
    };
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        let k = support.len();
        let embed = |u: DVector<f64>| {
            let mut v = DVector::zeros(p);
            for (i, &j) in support.iter().enumerate() {
                v[j] = u[i];
            }
            v
        };
        let gs = DMatrix::from_fn(k, k, |a, b| g[(support[a], support[b])]);
        consider(embed(restricted_min(&gs, &DMatrix::identity(k, k))));
        if k <= t {
            continue;
        }
        // active l1 constraint: sum_{S \ A} s_j b_j = alpha sum_A s_j b_j
        for signs in 0u32..(1 << (k - 1)) {
            let sign = |i: usize| if i > 0 && signs >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 };
            for top in 1u32..(1 << k) {
                if top.count_ones() as usize > t {
                    continue;
                }
                let c = DVector::from_fn(k, |i, _| if top >> i & 1 == 1 { -alpha * sign(i) } else { sign(i) });
                let mut aug = DMatrix::zeros(k, k + 1);
                aug.set_column(0, &c);
                for i in 0..k {
                    aug[(i, i + 1)] = 1.0;
                }
                let q = aug.qr().q();
                let basis = q.columns(1, k - 1).into_owned();
                consider(embed(restricted_min(&gs, &basis)));
            }
        }
    }
    best
}

fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x / x.nrows() as f64
}

fn check_args(x: &DMatrix<f64>, t: usize, alpha: f64) -> Result<()> {
    if t == 0 {
        return invalid("mrev needs t >= 1");
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be finite and >= 1, got {alpha}"));
    }
    if x.ncols() == 0 {
        return invalid("empty design");
    }
    Ok(())
}

/// Upper estimate of the minimum restricted eigenvalue of order `t`.
pub fn mrev(x: &DMatrix<f64>, t: usize, alpha: f64, method: MrevMethod, exec: Exec) -> Result<MrevEstimate> {
    check_args(x, t, alpha)?;
    let g = gram(x);
    let p = x.ncols();
    let t = t.min(p);
    if p == 1 {
        return Ok(MrevEstimate {
            value: g[(0, 0)],
            method: method.tag(),
            resolution_deg: None,
            grid_points: None,
            slack: None,
            argmin: vec![1.0],
        });
    }
    match method {
        MrevMethod::DenseGrid => {
            if p > DENSE_GRID_MAX_P {
                return invalid(format!("dense-grid MREV supports p <= {DENSE_GRID_MAX_P}, got p = {p}"));
            }
            let (m, points) = grid_steps(p);
            let first = if p == 2 { m } else { m + 1 };
            let slices = exec.map_range(first, |i0| grid_slice(&g, p, m, i0, t, alpha));
            let mut best = Vec::new();
            for hit in slices.into_iter().flatten() {
                keep_best(&mut best, hit);
            }
            let mut polished = exec.map(best, |h| descend(&g, DVector::from_vec(h.beta), t, alpha, None));
            polished.push(face_search(&g, t, alpha));
            let (value, argmin) = pick(polished);
            let h = std::f64::consts::PI / m as f64;
            Ok(MrevEstimate {
                value,
                method: method.tag(),
                resolution_deg: Some(180.0 / m as f64),
                grid_points: Some(points),
                slack: Some(max_eigenvalue(&g) * (p - 1) as f64 * h),
                argmin,
            })
        }
        MrevMethod::Randomized { restarts, seed } => {
            if restarts == 0 {
                return invalid("randomized MREV needs at least one restart");
            }
            let runs = exec.map_range(restarts, |r| {
                let mut rng = stream(derive_seed(seed, &[r as u64]));
                let start = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                descend(&g, start, t, alpha, None)
            });
            let (value, argmin) = pick(runs);
            Ok(MrevEstimate {
                value,
                method: method.tag(),
                resolution_deg: None,
                grid_points: None,
                slack: None,
                argmin,
            })
        }
    }
}

fn pick(runs: Vec<(f64, DVector<f64>)>) -> (f64, Vec<f64>) {
    let (v, b) = runs
        .into_iter()
        .fold(None, |acc: Option<(f64, DVector<f64>)>, (v, b)| match acc {
            Some((av, ab)) if av <= v => Some((av, ab)),
            _ => Some((v, b)),
        })
        .expect("at least one run");
    (v, b.iter().copied().collect())
}

/// The same descent with `beta` pinned to zero off each `|xi| = min(t, p)`
/// model. Sparse vectors are always cone-feasible, so this reproduces the
/// minimum sparse eigenvalue; used to validate the optimizer.
pub fn mrev_sparse_restricted(
    x: &DMatrix<f64>,
    t: usize,
    restarts: usize,
    seed: u64,
    cap: u128,
    exec: Exec,
) -> Result<Extremum> {
    check_args(x, t, 1.0)?;
    let p = x.ncols();
    let k = t.min(p);
    check_budget(subset_count(p, k, k), cap)?;
    let g = gram(x);
    let models = k_subsets(p, k);
    let runs = exec.map(models.into_iter().enumerate().collect(), |(i, xi): (usize, Vec<usize>)| {
        let mut mask = vec![false; p];
        for &j in &xi {
            mask[j] = true;
        }
        let mut best = f64::INFINITY;
        for r in 0..restarts.max(1) {
            let mut rng = stream(derive_seed(seed, &[i as u64, r as u64]));
            let start = DVector::from_fn(p, |j, _| if mask[j] { rng.sample::<f64, _>(StandardNormal) } else { 0.0 });
            let (v, _) = descend(&g, start, k, 1.0, Some(&mask));
            best = best.min(v);
        }
        Extremum { value: best, witness: ModelIndex::from_sorted_unchecked(xi) }
    });
    Ok(runs.into_iter().reduce(|a, b| if b.value < a.value { b } else { a }).expect("at least one model"))
}

fn k_subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < p - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
    }
}

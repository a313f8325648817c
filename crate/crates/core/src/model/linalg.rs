//! Projection, rank and small dense factorizations shared by every module.

use nalgebra::{DMatrix, DVector};

use super::index::ModelIndex;
use crate::error::{Error, Result};

/// Relative factor in the numerical rank threshold: singular values below
/// `sigma_max * max(rows, cols) * RANK_EPS` count as zero.
pub const RANK_EPS: f64 = 1e-12;

pub fn rank_tolerance(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * rows.max(cols) as f64 * RANK_EPS
}

/// Columns of `x` selected by `xi`, in model order.
pub fn columns(x: &DMatrix<f64>, xi: &ModelIndex) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), xi.len(), |i, k| x[(i, xi.members()[k])])
}

/// Singular values (descending) and numerical rank of a dense matrix.
pub fn singular_values_and_rank(a: &DMatrix<f64>) -> (Vec<f64>, usize) {
    if a.ncols() == 0 || a.nrows() == 0 {
        return (Vec::new(), 0);
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let tol = rank_tolerance(sv[0], a.nrows(), a.ncols());
    let rank = sv.iter().filter(|&&s| s > tol).count();
    (sv, rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankInfo {
    pub rank: usize,
    pub full_rank: bool,
}

/// Numerical full-rank test for `X_xi`. The empty model is full rank with
/// rank 0; a model with more members than rows never is.
pub fn is_full_rank(x: &DMatrix<f64>, xi: &ModelIndex) -> RankInfo {
    if xi.is_empty() {
        return RankInfo { rank: 0, full_rank: true };
    }
    let (_, rank) = singular_values_and_rank(&columns(x, xi));
    RankInfo { rank, full_rank: rank == xi.len() }
}

/// Orthonormal basis for the column space of `X_xi`, obtained from a thin
/// SVD with the module-wide rank threshold.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: DMatrix<f64>,
    rank: usize,
    size: usize,
}

impl Projector {
    /// Basis for the column span of `X_xi`, rank deficient or not.
    pub fn span(x: &DMatrix<f64>, xi: &ModelIndex) -> Self {
        Self::span_of(&columns(x, xi))
    }

    pub fn span_of(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let size = a.ncols();
        if size == 0 {
            return Self { basis: DMatrix::zeros(n, 0), rank: 0, size };
        }
        let svd = a.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = rank_tolerance(smax, n, size);
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
        let basis = DMatrix::from_fn(n, keep.len(), |i, k| u[(i, keep[k])]);
        Self { rank: keep.len(), basis, size }
    }

    /// Basis for a full-rank model; rank deficiency is an error.
    pub fn full_rank(x: &DMatrix<f64>, xi: &ModelIndex) -> Result<Self> {
        let pr = Self::span(x, xi);
        if pr.rank < pr.size {
            return Err(Error::RankDeficient { model: xi.to_string(), rank: pr.rank, size: pr.size });
        }
        Ok(pr)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank == 0 {
            return DVector::zeros(v.len());
        }
        &self.basis * (self.basis.transpose() * v)
    }

    /// `||P v||^2` without forming `P v`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        if self.rank == 0 {
            return 0.0;
        }
        (self.basis.transpose() * v).norm_squared()
    }
}

/// `P_xi v` for a full-rank model.
pub fn project_onto_model(x: &DMatrix<f64>, xi: &ModelIndex, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != x.nrows() {
        return Err(Error::InvalidArgument(format!("vector length {} does not match {} rows", v.len(), x.nrows())));
    }
    xi.check_within(x.ncols())?;
    Ok(Projector::full_rank(x, xi)?.apply(v))
}

/// Upper-triangular factor `R` with `A'A = R'R`, grown one column at a time
/// by Gram-Schmidt with one reorthogonalization pass. Working on the columns
/// directly (rather than on the Gram matrix) keeps the diagonal accurate to
/// machine precision relative to the column norms, which the rank test
/// depends on.
#[derive(Debug, Clone)]
pub struct IncrementalQr {
    rows: usize,
    q: Vec<DVector<f64>>,
    r: Vec<Vec<f64>>,
    /// running maximum column norm, one entry per appended column
    scale: Vec<f64>,
    dependent: Vec<bool>,
    deficient: usize,
}

impl IncrementalQr {
    pub fn new(rows: usize) -> Self {
        Self { rows, q: Vec::new(), r: Vec::new(), scale: Vec::new(), dependent: Vec::new(), deficient: 0 }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Orthonormal columns spanning the appended block; dependent columns
    /// leave a zero vector in their slot.
    pub fn basis(&self) -> &[DVector<f64>] {
        &self.q
    }

    /// Number of appended columns whose residual fell under the rank threshold.
    pub fn deficient(&self) -> usize {
        self.deficient
    }

    /// Append a column. Returns `false` if it is numerically dependent on the
    /// columns already present.
    pub fn push(&mut self, col: &DVector<f64>) -> bool {
        debug_assert_eq!(col.len(), self.rows);
        let mut w = col.clone();
        let mut coeffs = vec![0.0; self.q.len() + 1];
        for _pass in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let c = qk.dot(&w);
                w.axpy(-c, qk, 1.0);
                coeffs[k] += c;
            }
        }
        let rkk = w.norm();
        let scale = self.scale.last().copied().unwrap_or(0.0).max(col.norm());
        self.scale.push(scale);
        let k = self.q.len() + 1;
        // sigma_max(A) <= sqrt(k) * max column norm
        let tol = rank_tolerance(scale * (k as f64).sqrt(), self.rows, k);
        let independent = rkk > tol;
        coeffs[k - 1] = rkk;
        if independent {
            w /= rkk;
        } else {
            self.deficient += 1;
            if rkk > 0.0 {
                w /= rkk;
            }
            // w is noise-dominated here; keep it out of later projections.
            w.fill(0.0);
        }
        self.q.push(w);
        self.r.push(coeffs);
        self.dependent.push(!independent);
        independent
    }

    pub fn pop(&mut self) {
        if self.q.pop().is_some() {
            self.r.pop();
            self.scale.pop();
            if self.dependent.pop() == Some(true) {
                self.deficient -= 1;
            }
        }
    }

    /// The triangular factor as a dense matrix.
    pub fn r_matrix(&self) -> DMatrix<f64> {
        let k = self.q.len();
        DMatrix::from_fn(k, k, |i, j| if i <= j { self.r[j][i] } else { 0.0 })
    }

    /// Singular values of the accumulated column block (descending).
    pub fn singular_values(&self) -> Vec<f64> {
        if self.q.is_empty() {
            return Vec::new();
        }
        let mut sv: Vec<f64> = self.r_matrix().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 0 {
        return f64::INFINITY;
    }
    s.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 0 {
        return 0.0;
    }
    s.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Principal submatrix `S[idx, idx]`.
pub fn principal(s: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| s[(idx[i], idx[j])])
}

/// Log-determinant from a Cholesky factor.
pub fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn empty_projection_is_zero() {
        let x = random_matrix(6, 3, 1);
        let v = DVector::from_element(6, 1.0);
        let pv = project_onto_model(&x, &ModelIndex::empty(), &v).unwrap();
        assert_eq!(pv, DVector::zeros(6));
    }

    #[test]
    fn projection_fixes_span_and_obeys_pythagoras() {
        let x = random_matrix(10, 5, 2);
        let xi = ModelIndex::new(vec![0, 2, 4]).unwrap();
        let coef = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let v = columns(&x, &xi) * &coef;
        let pv = project_onto_model(&x, &xi, &v).unwrap();
        assert!((&pv - &v).norm() <= 1e-9 * v.norm());

        // dense oracle: P = A (A'A)^{-1} A'
        let a = columns(&x, &xi);
        let p_dense = &a * (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        let w = DVector::from_fn(10, |i, _| (i as f64).sin());
        let pw = project_onto_model(&x, &xi, &w).unwrap();
        assert!((&pw - &p_dense * &w).norm() < 1e-10);
        let resid = &w - &pw;
        assert_abs_diff_eq!(pw.norm_squared() + resid.norm_squared(), w.norm_squared(), epsilon = 1e-9);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let mut x = random_matrix(8, 3, 3);
        let c0 = x.column(0).clone_owned();
        x.set_column(1, &c0);
        let info = is_full_rank(&x, &ModelIndex::new(vec![0, 1]).unwrap());
        assert_eq!(info, RankInfo { rank: 1, full_rank: false });
        let err = project_onto_model(&x, &ModelIndex::new(vec![0, 1]).unwrap(), &DVector::zeros(8));
        assert!(matches!(err, Err(Error::RankDeficient { rank: 1, size: 2, .. })));
    }

    #[test]
    fn more_columns_than_rows_is_never_full_rank() {
        let x = random_matrix(3, 5, 4);
        let info = is_full_rank(&x, &ModelIndex::new(vec![0, 1, 2, 3]).unwrap());
        assert!(!info.full_rank);
        assert_eq!(info.rank, 3);
        assert!(is_full_rank(&x, &ModelIndex::empty()).full_rank);
    }

    #[test]
    fn incremental_qr_matches_direct_svd() {
        let x = random_matrix(12, 5, 5);
        let mut qr = IncrementalQr::new(12);
        for j in 0..5 {
            assert!(qr.push(&x.column(j).clone_owned()));
        }
        let (sv, _) = singular_values_and_rank(&x);
        for (a, b) in qr.singular_values().iter().zip(&sv) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let rtr = qr.r_matrix().transpose() * qr.r_matrix();
        assert!((rtr - x.transpose() * &x).norm() < 1e-10);
        qr.pop();
        assert_eq!(qr.len(), 4);
        let dup = x.column(1).clone_owned() * 2.0;
        assert!(!qr.push(&dup));
        assert_eq!(qr.deficient(), 1);
        qr.pop();
        assert_eq!(qr.deficient(), 0);
    }
}

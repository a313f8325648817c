use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::linalg::{min_eigenvalue, principal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurCheck {
    /// `lambda_min(S22 - S21 S11^{-1} S12)`
    pub lhs: f64,
    /// `lambda_min(S)`
    pub rhs: f64,
    pub holds: bool,
}

/// Compare the smallest eigenvalue of the Schur complement of `S[block,
/// block]` with that of `S`.
pub fn schur_bound_check(s: &DMatrix<f64>, block: &[usize]) -> Result<SchurCheck> {
    let p = s.nrows();
    if s.ncols() != p {
        return invalid("matrix must be square");
    }
    let mut inside = vec![false; p];
    for &i in block {
        if i >= p || inside[i] {
            return invalid(format!("block index {i} out of range or repeated"));
        }
        inside[i] = true;
    }
    let rest: Vec<usize> = (0..p).filter(|&i| !inside[i]).collect();
    if block.is_empty() || rest.is_empty() {
        return invalid("both blocks must be nonempty");
    }
    let s11 = principal(s, block);
    let s22 = principal(s, &rest);
    let s21 = DMatrix::from_fn(rest.len(), block.len(), |i, j| s[(rest[i], block[j])]);
    let chol =
        s11.clone().cholesky().ok_or_else(|| Error::Singular("leading block is not positive definite".into()))?;
    let schur = &s22 - &s21 * chol.solve(&s21.transpose());
    let schur = (&schur + schur.transpose()) * 0.5;
    let lhs = min_eigenvalue(&schur);
    let rhs = min_eigenvalue(s);
    Ok(SchurCheck { lhs, rhs, holds: lhs >= rhs - 1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let c = schur_bound_check(&DMatrix::identity(4, 4), &[0, 2]).unwrap();
        assert_abs_diff_eq!(c.lhs, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.rhs, 1.0, epsilon = 1e-14);
        assert!(c.holds);
    }

    #[test]
    fn block_diagonal_complement_is_s22() {
        let mut s = DMatrix::zeros(3, 3);
        s[(0, 0)] = 0.5;
        s[(1, 1)] = 2.0;
        s[(2, 2)] = 3.0;
        s[(1, 2)] = 0.5;
        s[(2, 1)] = 0.5;
        let c = schur_bound_check(&s, &[0]).unwrap();
        let s22 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        assert_abs_diff_eq!(c.lhs, min_eigenvalue(&s22), epsilon = 1e-14);
        assert!(c.lhs >= c.rhs);
    }

    #[test]
    fn singular_leading_block_is_rejected() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(schur_bound_check(&s, &[0, 1]), Err(Error::Singular(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn holds_on_wishart_matrices(p in 2usize..=8, extra in 0usize..6,
                                     entries in proptest::collection::vec(-1.0f64..1.0, 14 * 8),
                                     split in proptest::collection::vec(any::<bool>(), 8)) {
            let m = p + extra;
            let a = DMatrix::from_fn(m, p, |i, j| entries[i * 8 + j]);
            let s = a.transpose() * &a;
            let mut block: Vec<usize> = (0..p).filter(|&i| split[i]).collect();
            if block.is_empty() { block.push(0); }
            if block.len() == p { block.pop(); }
            if let Ok(c) = schur_bound_check(&s, &block) {
                prop_assert!(c.holds, "lhs {} rhs {}", c.lhs, c.rhs);
            }
        }
    }
}

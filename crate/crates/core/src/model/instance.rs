use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::index::ModelIndex;
use super::linalg::is_full_rank;
use crate::error::{invalid, Error, Result};
use crate::rng::{stream, StreamRng};

/// Row distribution of the synthetic design before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpec {
    IidGaussian,
    Equicorrelated {
        rho: f64,
    },
    /// iid Gaussian with the second column overwritten by the first.
    DuplicateColumnDemo,
    /// Exactly orthogonal standardized columns; needs `p < n`.
    Orthogonal,
}

/// Nonzero coefficients on the true support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    /// `s` values of the given magnitude with independent random signs.
    ConstantRandomSign {
        magnitude: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta_star: DVector<f64>,
    pub sigma_star: f64,
    pub xi_star: ModelIndex,
}

impl GroundTruth {
    pub fn s(&self) -> usize {
        self.xi_star.len()
    }

    /// `max_{j in xi*} |beta*_j|/sigma*`, zero for the null model.
    pub fn max_standardized_signal(&self) -> f64 {
        self.xi_star.members().iter().map(|&j| self.beta_star[j].abs()).fold(0.0, f64::max) / self.sigma_star
    }

    pub fn min_signal(&self) -> f64 {
        self.xi_star.members().iter().map(|&j| self.beta_star[j].abs()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Option<GroundTruth>,
    pub seed: Option<u64>,
    pub design: Option<DesignSpec>,
}

const NORM_TOL: f64 = 1e-9;

impl ProblemInstance {
    /// Assemble an instance, checking standardization and ground-truth
    /// consistency.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, truth: Option<GroundTruth>) -> Result<Self> {
        let inst = Self { x, y, truth, seed: None, design: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn truth(&self) -> Result<&GroundTruth> {
        self.truth.as_ref().ok_or(Error::MissingGroundTruth)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        if n == 0 || p == 0 {
            return invalid("design must have at least one row and one column");
        }
        if self.y.len() != n {
            return invalid(format!("response has length {} but design has {n} rows", self.y.len()));
        }
        let target = (n as f64).sqrt();
        for j in 0..p {
            let norm = self.x.column(j).norm();
            if (norm - target).abs() > NORM_TOL * target {
                return invalid(format!("column {} has norm {norm}, expected sqrt(n) = {target}", j + 1));
            }
        }
        if let Some(gt) = &self.truth {
            if gt.beta_star.len() != p {
                return invalid("beta_star length differs from p");
            }
            if !(gt.sigma_star > 0.0 && gt.sigma_star.is_finite()) {
                return invalid("sigma_star must be positive");
            }
            gt.xi_star.check_within(p)?;
            let support: Vec<usize> = (0..p).filter(|&j| gt.beta_star[j] != 0.0).collect();
            if support != gt.xi_star.members() {
                return invalid("xi_star must equal the support of beta_star");
            }
            let info = is_full_rank(&self.x, &gt.xi_star);
            if !info.full_rank {
                return Err(Error::RankDeficient {
                    model: gt.xi_star.to_string(),
                    rank: info.rank,
                    size: gt.xi_star.len(),
                });
            }
        }
        Ok(())
    }

    /// Same design and truth with a fresh response `X beta* + sigma* eps`
    /// (centered), drawn from `seed`.
    pub fn redraw_noise(&self, seed: u64) -> Result<Self> {
        let gt = self.truth()?;
        let mut rng = stream(seed);
        let y = response(&self.x, gt, &mut rng);
        Ok(Self { y, seed: Some(seed), ..self.clone() })
    }
}

/// Center each column, then rescale it to Euclidean norm `sqrt(n)`.
pub fn standardize_columns(x: &mut DMatrix<f64>) -> Result<()> {
    let n = x.nrows();
    let target = (n as f64).sqrt();
    for j in 0..x.ncols() {
        let mut col = x.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm == 0.0 {
            return invalid(format!("column {} is constant and cannot be standardized", j + 1));
        }
        col *= target / norm;
    }
    Ok(())
}

fn gaussian_matrix(n: usize, p: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    // column-major fill keeps the draw order independent of the storage layout
    let mut m = DMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn draw_design(n: usize, p: usize, design: DesignSpec, rng: &mut StreamRng) -> Result<DMatrix<f64>> {
    let mut x = gaussian_matrix(n, p, rng);
    match design {
        DesignSpec::IidGaussian => {}
        DesignSpec::Equicorrelated { rho } => {
            let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
            if !(rho > lower && rho < 1.0) {
                return invalid(format!("rho = {rho} outside ({lower}, 1)"));
            }
            let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
            let l = sigma.cholesky().ok_or_else(|| Error::Singular("equicorrelation matrix".into()))?.l();
            x *= l.transpose();
        }
        DesignSpec::DuplicateColumnDemo => {
            if p < 2 {
                return invalid("duplicate-column design needs p >= 2");
            }
        }
        DesignSpec::Orthogonal => {
            if p >= n {
                return invalid(format!("orthogonal centered design needs p < n (p={p}, n={n})"));
            }
            for j in 0..p {
                let mean = x.column(j).mean();
                x.column_mut(j).add_scalar_mut(-mean);
            }
            x = x.qr().q();
        }
    }
    standardize_columns(&mut x)?;
    if let DesignSpec::DuplicateColumnDemo = design {
        let first = x.column(0).clone_owned();
        x.set_column(1, &first);
    }
    Ok(x)
}

/// True support: the first `s` indices, skipping the duplicated column of
/// the duplicate-column design so the truth stays full rank.
fn support(p: usize, s: usize, design: DesignSpec) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = match design {
        DesignSpec::DuplicateColumnDemo => (0..p).filter(|&j| j != 1).collect(),
        _ => (0..p).collect(),
    };
    if s > candidates.len() {
        return invalid(format!("s = {s} exceeds the {} admissible support positions", candidates.len()));
    }
    Ok(candidates[..s].to_vec())
}

fn response(x: &DMatrix<f64>, gt: &GroundTruth, rng: &mut StreamRng) -> DVector<f64> {
    let n = x.nrows();
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = x * &gt.beta_star + eps * gt.sigma_star;
    let mean = y.mean();
    y.add_scalar_mut(-mean);
    y
}

/// Draw a design and a response `Y = X beta* + sigma* eps` from `seed`.
pub fn generate_instance(
    n: usize,
    p: usize,
    s: usize,
    signal: &CoefficientSpec,
    sigma_star: f64,
    design: DesignSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    if n < 2 || p == 0 {
        return invalid(format!("need n >= 2 and p >= 1 (got n={n}, p={p})"));
    }
    if s > p {
        return invalid(format!("s = {s} exceeds p = {p}"));
    }
    if !(sigma_star > 0.0 && sigma_star.is_finite()) {
        return invalid(format!("sigma_star must be positive, got {sigma_star}"));
    }
    let mut rng = stream(seed);
    let x = draw_design(n, p, design, &mut rng)?;
    let truth = truth_for(p, s, signal, sigma_star, design, &mut rng)?;
    let y = response(&x, &truth, &mut rng);
    let inst = ProblemInstance { x, y, truth: Some(truth), seed: Some(seed), design: Some(design) };
    inst.validate()?;
    Ok(inst)
}

fn truth_for(
    p: usize,
    s: usize,
    signal: &CoefficientSpec,
    sigma_star: f64,
    design: DesignSpec,
    rng: &mut StreamRng,
) -> Result<GroundTruth> {
    let positions = support(p, s, design)?;
    let values: Vec<f64> = match signal {
        CoefficientSpec::ConstantRandomSign { magnitude } => {
            if !(*magnitude > 0.0 && magnitude.is_finite()) {
                return invalid("signal magnitude must be positive");
            }
            (0..s).map(|_| if rng.random::<bool>() { *magnitude } else { -magnitude }).collect()
        }
        CoefficientSpec::Explicit { values } => {
            if values.len() != s || values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
                return invalid(format!("explicit signal needs {s} finite nonzero values"));
            }
            values.clone()
        }
    };
    let mut beta_star = DVector::zeros(p);
    for (&j, v) in positions.iter().zip(values) {
        beta_star[j] = v;
    }
    Ok(GroundTruth { beta_star, sigma_star, xi_star: ModelIndex::new(positions)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linalg::columns;

    fn iid(n: usize, p: usize, s: usize, seed: u64) -> ProblemInstance {
        let signal = CoefficientSpec::ConstantRandomSign { magnitude: 2.0 };
        generate_instance(n, p, s, &signal, 1.0, DesignSpec::IidGaussian, seed).unwrap()
    }

    #[test]
    fn columns_are_standardized() {
        for design in [
            DesignSpec::IidGaussian,
            DesignSpec::Equicorrelated { rho: 0.5 },
            DesignSpec::Equicorrelated { rho: -0.05 },
            DesignSpec::DuplicateColumnDemo,
            DesignSpec::Orthogonal,
        ] {
            let inst =
                generate_instance(30, 8, 2, &CoefficientSpec::ConstantRandomSign { magnitude: 1.0 }, 1.0, design, 3)
                    .unwrap();
            for j in 0..8 {
                assert!((inst.x.column(j).norm() - 30f64.sqrt()).abs() < 1e-9 * 30f64.sqrt());
                assert!(inst.x.column(j).mean().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthogonal_design_has_identity_gram() {
        let inst =
            generate_instance(20, 5, 0, &CoefficientSpec::Explicit { values: vec![] }, 1.0, DesignSpec::Orthogonal, 1)
                .unwrap();
        let g = inst.x.transpose() * &inst.x / 20.0;
        assert!((g - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn null_model_response_is_centered_with_unit_variance() {
        let inst = iid(5000, 10, 0, 11);
        assert!(inst.y.mean().abs() < 1e-12);
        let var = inst.y.norm_squared() / 4999.0;
        assert!((var - 1.0).abs() < 0.06, "variance {var}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
        assert!(generate_instance(10, 3, 4, &sig, 1.0, DesignSpec::IidGaussian, 0).is_err());
        assert!(generate_instance(10, 3, 1, &sig, 0.0, DesignSpec::IidGaussian, 0).is_err());
        assert!(generate_instance(10, 3, 1, &sig, 1.0, DesignSpec::Equicorrelated { rho: -0.5 }, 0).is_err());
        assert!(generate_instance(10, 3, 1, &sig, 1.0, DesignSpec::Equicorrelated { rho: 1.0 }, 0).is_err());
    }

    #[test]
    fn duplicate_design_keeps_truth_full_rank() {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
        let inst = generate_instance(20, 5, 2, &sig, 1.0, DesignSpec::DuplicateColumnDemo, 4).unwrap();
        assert_eq!(inst.x.column(0), inst.x.column(1));
        assert_eq!(inst.truth.unwrap().xi_star.members(), &[0, 2]);
    }

    #[test]
    fn same_seed_same_instance() {
        assert_eq!(iid(40, 6, 2, 9), iid(40, 6, 2, 9));
        assert_ne!(iid(40, 6, 2, 9).y, iid(40, 6, 2, 10).y);
    }

    #[test]
    fn oracle_least_squares_on_true_support() {
        // Restricted OLS error is N(0, sigma^2 (X'X)^{-1}); its norm exceeds
        // 3 sigma sqrt(s / lambda_min) with small probability.
        let mut hits = 0;
        for seed in 0..100 {
            let inst = iid(200, 20, 3, seed);
            let gt = inst.truth.as_ref().unwrap();
            let xs = columns(&inst.x, &gt.xi_star);
            let gram = xs.transpose() * &xs;
            let lmin = crate::model::linalg::min_eigenvalue(&gram);
            let est = gram.clone().cholesky().unwrap().solve(&(xs.transpose() * &inst.y));
            let truth = DVector::from_iterator(3, gt.xi_star.members().iter().map(|&j| gt.beta_star[j]));
            if (est - truth).norm() < 3.0 * (3.0 / lmin).sqrt() {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}");
    }
}

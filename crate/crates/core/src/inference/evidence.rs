use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::linalg::{columns, max_eigenvalue, min_eigenvalue, principal, singular_values_and_rank};
use crate::model::{ModelIndex, ProblemInstance};
use crate::priors::{PriorSpec, SlabDist, SpikeDist, VariancePrior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sufficient statistics of a fixed design and response.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub n: usize,
    pub p: usize,
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    col_sq: Vec<f64>,
}

impl SuffStats {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Self::with_gram(x, x.tr_mul(x), y)
    }

    /// Reuse a Gram matrix computed for the same design.
    pub fn with_gram(x: &DMatrix<f64>, gram: DMatrix<f64>, y: &DVector<f64>) -> Self {
        let col_sq = (0..gram.ncols()).map(|j| gram[(j, j)]).collect();
        Self { n: x.nrows(), p: x.ncols(), gram, xty: x.tr_mul(y), yty: y.norm_squared(), col_sq }
    }

    pub fn from_instance(inst: &ProblemInstance) -> Self {
        Self::new(&inst.x, &inst.y)
    }

    /// Rank test agreeing with the SVD criterion on `X_xi`: a well
    /// conditioned Gram block settles it, anything close to singular is
    /// decided on the columns themselves.
    pub fn full_rank(&self, x: &DMatrix<f64>, xi: &ModelIndex) -> bool {
        let k = xi.len();
        if k == 0 {
            return true;
        }
        if k > self.n {
            return false;
        }
        let idx = xi.members();
        if idx.iter().any(|&j| self.col_sq[j] == 0.0) {
            return false;
        }
        let g = principal(&self.gram, idx);
        let (lo, hi) = (min_eigenvalue(&g), max_eigenvalue(&g));
        if hi > 0.0 && lo > 1e-8 * hi {
            return true;
        }
        singular_values_and_rank(&columns(x, xi)).1 == k
    }
}

/// Per-coordinate prior variances (in units of `sigma^2`) for the Gaussian
/// representation of a model. `None` marks an exact zero.
pub(crate) fn gaussian_variances(prior: &PriorSpec, xi: &ModelIndex, p: usize) -> Result<Vec<Option<f64>>> {
    let slab = match prior.slab {
        SlabDist::Gaussian { scale } => scale * scale,
        SlabDist::Laplace { .. } => return Err(Error::Unsupported("laplace slab has no closed-form evidence".into())),
    };
    let spike = match prior.spike {
        SpikeDist::Dirac => None,
        SpikeDist::Gaussian { scale } => Some(scale * scale),
        SpikeDist::Laplace { .. } => {
            return Err(Error::Unsupported("laplace spike has no closed-form evidence".into()))
        }
    };
    let mut v = vec![spike; p];
    for &j in xi.members() {
        v[j] = Some(slab);
    }
    Ok(v)
}

/// `beta` and `sigma^2` integrated out of a conditionally Gaussian model.
#[derive(Debug, Clone)]
pub struct Collapsed {
    pub active: Vec<usize>,
    pub ln_evidence: f64,
    pub a_post: f64,
    pub b_post: f64,
    /// Cholesky factor of `A = X_a'X_a + V^{-1}`.
    pub chol: DMatrix<f64>,
    /// `A^{-1} X_a'Y`.
    pub mean: DVector<f64>,
}

impl Collapsed {
    /// `log m(Y)` for `Y | beta, s2 ~ N(X beta, s2 I)`, `beta_a | s2 ~
    /// N(0, s2 diag(v))`, off-active coordinates zero, `s2 ~ g`.
    pub fn new(stats: &SuffStats, active: Vec<usize>, v: &[f64], variance: &VariancePrior) -> Result<Self> {
        let k = active.len();
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        let mut ln_v = 0.0;
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                a[(r, c)] = stats.gram[(i, j)];
            }
            a[(r, r)] += 1.0 / v[r];
            b[r] = stats.xty[i];
            ln_v += v[r].ln();
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Singular("posterior precision is not positive definite".into()))?
            .unpack();
        let half_ln_det: f64 = (0..k).map(|i| chol[(i, i)].ln()).sum();
        let w = chol.solve_lower_triangular(&b).expect("nonzero diagonal");
        let mean = chol.tr_solve_lower_triangular(&w).expect("nonzero diagonal");
        let quad = (stats.yty - w.norm_squared()).max(0.0);
        let (a0, b0) = variance.shape_rate();
        let a_post = a0 + stats.n as f64 / 2.0;
        let b_post = b0 + quad / 2.0;
        let ln_evidence = -0.5 * stats.n as f64 * LN_2PI - 0.5 * ln_v - half_ln_det
            + variance.ln_kernel_integral(a_post, b_post)
            - variance.ln_kernel_integral(a0, b0);
        Ok(Self { active, ln_evidence, a_post, b_post, chol, mean })
    }

    /// Conjugate model of a Gaussian-slab prior.
    pub fn for_model(stats: &SuffStats, prior: &PriorSpec, xi: &ModelIndex) -> Result<Self> {
        let v = gaussian_variances(prior, xi, stats.p)?;
        let (active, vars): (Vec<usize>, Vec<f64>) =
            v.iter().enumerate().filter_map(|(j, vj)| vj.map(|x| (j, x))).unzip();
        Self::new(stats, active, &vars, &prior.variance)
    }

    /// Draw `(sigma^2, beta)` from the conditional posterior given the model.
    pub fn draw<R: Rng + ?Sized>(&self, variance: &VariancePrior, p: usize, rng: &mut R) -> (f64, DVector<f64>) {
        let s2 = variance.sample_conditional(self.a_post, self.b_post, rng);
        let beta = self.draw_beta(s2, p, rng);
        (s2, beta)
    }

    pub fn draw_beta<R: Rng + ?Sized>(&self, s2: f64, p: usize, rng: &mut R) -> DVector<f64> {
        let k = self.active.len();
        let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dev = self.chol.tr_solve_lower_triangular(&z).expect("nonzero diagonal");
        let mut beta = DVector::zeros(p);
        let sd = s2.sqrt();
        for (r, &j) in self.active.iter().enumerate() {
            beta[j] = self.mean[r] + sd * dev[r];
        }
        beta
    }
}

/// Log marginal likelihood `log p(Y | xi)` of a conjugate prior.
pub fn log_model_evidence(xi: &ModelIndex, inst: &ProblemInstance, prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    if !prior.is_conjugate() {
        return Err(Error::Unsupported(
            "closed-form evidence needs a gaussian slab and a dirac or gaussian spike".into(),
        ));
    }
    xi.check_within(inst.p())?;
    let info = crate::model::is_full_rank(&inst.x, xi);
    if !info.full_rank {
        return Err(Error::RankDeficient { model: xi.to_string(), rank: info.rank, size: xi.len() });
    }
    if prior.spike.is_dirac() {
        // only the model columns enter
        let stats = SuffStats::new(&columns(&inst.x, xi), &inst.y);
        let local = ModelIndex::from_sorted_unchecked((0..xi.len()).collect());
        return Ok(Collapsed::for_model(&stats, prior, &local)?.ln_evidence);
    }
    Ok(Collapsed::for_model(&SuffStats::from_instance(inst), prior, xi)?.ln_evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, CoefficientSpec, DesignSpec};
    use approx::assert_relative_eq;

    fn conj(tau: f64) -> PriorSpec {
        PriorSpec { slab: SlabDist::Gaussian { scale: tau }, ..PriorSpec::default() }
    }

    fn small(n: usize, p: usize, seed: u64) -> ProblemInstance {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 0.6 };
        generate_instance(n, p, 1, &sig, 1.0, DesignSpec::IidGaussian, seed).unwrap()
    }

    /// `int_0^inf N(Y | 0, s2 I) g(s2) ds2` by Simpson on `u = log s2`.
    fn null_by_quadrature(y: &DVector<f64>, a: f64, b: f64) -> f64 {
        let n = y.len() as f64;
        let yy = y.norm_squared();
        let g = VariancePrior::InverseGamma { a, b };
        let f = |u: f64| {
            let s2 = u.exp();
            -0.5 * n * (LN_2PI + s2.ln()) - yy / (2.0 * s2) + g.ln_density(s2) + u
        };
        let (lo, hi, m) = (-12.0_f64, 12.0_f64, 40_000);
        let h = (hi - lo) / m as f64;
        let vals: Vec<f64> = (0..=m).map(|i| f(lo + i as f64 * h)).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (v - top).exp();
        }
        top + (acc * h / 3.0).ln()
    }

    #[test]
    fn null_model_matches_quadrature() {
        let inst = small(30, 4, 3);
        for (a, b) in [(1.0, 1.0), (2.5, 0.4)] {
            let prior = PriorSpec { variance: VariancePrior::InverseGamma { a, b }, ..conj(1.0) };
            let closed = log_model_evidence(&ModelIndex::empty(), &inst, &prior).unwrap();
            assert_relative_eq!(closed, null_by_quadrature(&inst.y, a, b), epsilon = 1e-6);
        }
    }

    #[test]
    fn nested_quadrature_on_three_coefficients() {
        // beta on a 3-D grid and sigma^2 on a 1-D grid
        let inst = small(20, 3, 11);
        let prior = conj(1.0);
        let xi = ModelIndex::new(vec![0, 1, 2]).unwrap();
        let closed = log_model_evidence(&xi, &inst, &prior).unwrap();

        let stats = SuffStats::from_instance(&inst);
        let col = Collapsed::for_model(&stats, &prior, &xi).unwrap();
        let g = prior.variance;
        let (su0, su1, ms) = (-4.0_f64, 3.0_f64, 140);
        let hs = (su1 - su0) / ms as f64;
        let mut outer = Vec::new();
        for is in 0..=ms {
            let u = su0 + is as f64 * hs;
            let s2 = u.exp();
            // beta grid centered on the conditional mean, +-7 sd wide
            let m: usize = 40;
            let inv = {
                let l = &col.chol;
                let li = l.clone().try_inverse().unwrap();
                li.transpose() * li
            };
            let half: Vec<f64> = (0..3).map(|i| 7.0 * (s2 * inv[(i, i)]).sqrt()).collect();
            let h: Vec<f64> = half.iter().map(|w| 2.0 * w / m as f64).collect();
            let mut vals = Vec::with_capacity((m + 1).pow(3));
            for i in 0..=m {
                for j in 0..=m {
                    for k in 0..=m {
                        let beta = DVector::from_vec(vec![
                            col.mean[0] - half[0] + i as f64 * h[0],
                            col.mean[1] - half[1] + j as f64 * h[1],
                            col.mean[2] - half[2] + k as f64 * h[2],
                        ]);
                        let r = &inst.y - &inst.x * &beta;
                        let ll = -0.5 * inst.n() as f64 * (LN_2PI + s2.ln()) - r.norm_squared() / (2.0 * s2);
                        let lp: f64 = beta.iter().map(|b| -0.5 * (LN_2PI + s2.ln()) - b * b / (2.0 * s2)).sum();
                        let w = [i, j, k]
                            .iter()
                            .map(|&q| {
                                if q == 0 || q == m {
                                    1.0
                                } else if q % 2 == 1 {
                                    4.0
                                } else {
                                    2.0
                                }
                            })
                            .product::<f64>();
                        vals.push((ll + lp, w));
                    }
                }
            }
            let top = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = vals.iter().map(|(v, w)| w * (v - top).exp()).sum();
            let ln_inner = top + (sum * h[0] * h[1] * h[2] / 27.0).ln();
            outer.push(ln_inner + g.ln_density(s2) + u);
        }
        let top = outer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        for (i, v) in outer.iter().enumerate() {
            let w = if i == 0 || i == ms {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (v - top).exp();
        }
        let numeric = top + (acc * hs / 3.0).ln();
        assert!((closed - numeric).abs() < 1e-3, "closed {closed} numeric {numeric}");
    }

    #[test]
    fn equal_components_make_evidence_depend_on_size_only() {
        let inst = small(25, 4, 5);
        let prior = PriorSpec { spike: SpikeDist::Gaussian { scale: 0.7 }, ..conj(0.7) };
        let a = log_model_evidence(&ModelIndex::new(vec![0]).unwrap(), &inst, &prior).unwrap();
        let b = log_model_evidence(&ModelIndex::new(vec![2, 3]).unwrap(), &inst, &prior).unwrap();
        let c = log_model_evidence(&ModelIndex::empty(), &inst, &prior).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert_relative_eq!(a, c, max_relative = 1e-12);
    }

    #[test]
    fn truncated_variance_prior_uses_its_normalizer() {
        let inst = small(30, 3, 8);
        let g = VariancePrior::TruncatedInverseGamma { a: 1.0, b: 1.0, lo: 0.0, hi: 1e12 };
        let prior = PriorSpec { variance: g, ..conj(1.0) };
        let xi = ModelIndex::new(vec![0]).unwrap();
        let t = log_model_evidence(&xi, &inst, &prior).unwrap();
        let u = log_model_evidence(&xi, &inst, &conj(1.0)).unwrap();
        assert_relative_eq!(t, u, epsilon = 1e-9);
    }

    #[test]
    fn rejects_nonconjugate_and_deficient_models() {
        let inst = small(20, 3, 1);
        let lap = PriorSpec { slab: SlabDist::Laplace { scale: 1.0 }, ..PriorSpec::default() };
        assert!(matches!(log_model_evidence(&ModelIndex::empty(), &inst, &lap), Err(Error::Unsupported(_))));
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
        let dup = generate_instance(20, 3, 1, &sig, 1.0, DesignSpec::DuplicateColumnDemo, 2).unwrap();
        let xi = ModelIndex::new(vec![0, 1]).unwrap();
        assert!(matches!(log_model_evidence(&xi, &dup, &PriorSpec::default()), Err(Error::RankDeficient { .. })));
        let stats = SuffStats::from_instance(&dup);
        assert!(!stats.full_rank(&dup.x, &xi));
        assert!(stats.full_rank(&dup.x, &ModelIndex::new(vec![0, 2]).unwrap()));
    }

    #[test]
    fn dirac_shortcut_matches_full_statistics() {
        let inst = small(40, 6, 21);
        let xi = ModelIndex::new(vec![1, 4]).unwrap();
        let prior = PriorSpec::default();
        let short = log_model_evidence(&xi, &inst, &prior).unwrap();
        let full = Collapsed::for_model(&SuffStats::from_instance(&inst), &prior, &xi).unwrap().ln_evidence;
        assert_relative_eq!(short, full, max_relative = 1e-12);
    }
}

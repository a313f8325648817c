use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::eigen::subset_count;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::inference::models_up_to;
use crate::model::linalg::{columns, rank_tolerance, Projector};
use crate::model::{epsilon_n, is_full_rank, ModelIndex, ProblemInstance, RegularityConstants};

/// One test statistic: whether it fires, its extremum over the model
/// class and the model attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiResult {
    pub fired: bool,
    pub extremum: f64,
    pub threshold: f64,
    pub witness: Option<ModelIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiStatistics {
    /// Residual-variance test.
    pub phi1: PhiResult,
    /// Least-squares coefficient test.
    pub phi2: PhiResult,
    /// Missed-signal test over models not containing the truth.
    pub phi3: PhiResult,
    pub models: usize,
}

/// Test functions of the contraction proofs, maximized or minimized over
/// full-rank models `xi` with `|xi \ xi*| <= K s`.
pub fn phi_statistics(
    inst: &ProblemInstance,
    consts: &RegularityConstants,
    lambda: f64,
    cap: u128,
    exec: Exec,
) -> Result<PhiStatistics> {
    let gt = inst.truth()?;
    phi_statistics_from(&inst.x, &inst.y, &gt.xi_star, &gt.beta_star, gt.sigma_star, consts, lambda, cap, exec)
}

/// As [`phi_statistics`] on raw data; `beta_star` need not vanish off
/// `xi_star`.
#[allow(clippy::too_many_arguments)]
pub fn phi_statistics_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xi_star: &ModelIndex,
    beta_star: &DVector<f64>,
    sigma_star: f64,
    consts: &RegularityConstants,
    lambda: f64,
    cap: u128,
    exec: Exec,
) -> Result<PhiStatistics> {
    let (n, p) = x.shape();
    xi_star.check_within(p)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let s = xi_star.len();
    let eps = epsilon_n(n, p, s.max(1))?;
    let comp = xi_star.complement(p);
    let extra = consts.overfit_cap(s).min(comp.len());
    let required = subset_count(comp.len(), 0, extra).saturating_mul(1u128 << s.min(100));
    if required > cap {
        return Err(Error::BudgetExceeded { required, cap });
    }

    let t1 = consts.m1 * eps;
    let t2 = if lambda > 0.0 { consts.m2 * sigma_star * eps / (2.0 * lambda.sqrt()) } else { f64::INFINITY };
    let t3 = consts.m3 * sigma_star * (n as f64).sqrt() * eps / 2.0;
    let proper: Vec<ModelIndex> = (0..(1usize << s) - 1)
        .map(|mask| {
            let m: Vec<usize> = (0..s).filter(|b| mask >> b & 1 == 1).map(|b| xi_star.members()[b]).collect();
            ModelIndex::from_sorted_unchecked(m)
        })
        .collect();

    let extras: Vec<ModelIndex> = models_up_to(comp.len(), extra)
        .into_iter()
        .map(|m| ModelIndex::from_sorted_unchecked(m.members().iter().map(|&k| comp[k]).collect()))
        .collect();
    let nsq = n as f64 * sigma_star * sigma_star;
    let per = exec.map(extras.clone(), |b| {
        if !is_full_rank(x, &b).full_rank {
            return None;
        }
        let u = xi_star.union(&b);
        let pu = Projector::span(x, &u);
        let fit = pu.apply(y);
        let s1 = ((y - &fit).norm_squared() / nsq - 1.0).abs();
        let xu = columns(x, &u);
        let svd = xu.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let coef = svd.solve(y, rank_tolerance(smax, n, u.len())).expect("thin SVD with both factors");
        let s2 = u.members().iter().enumerate().map(|(r, &j)| (coef[r] - beta_star[j]).powi(2)).sum::<f64>().sqrt();
        let s3: Vec<(ModelIndex, f64)> = proper
            .iter()
            .map(|a| a.union(&b))
            .filter(|xi| is_full_rank(x, xi).full_rank)
            .map(|xi| {
                let v = (&fit - Projector::span(x, &xi).apply(y)).norm();
                (xi, v)
            })
            .collect();
        Some((b, s1, s2, s3))
    });

    let mut phi1 = (f64::NEG_INFINITY, None);
    let mut phi2 = (f64::NEG_INFINITY, None);
    let mut phi3: (f64, Option<ModelIndex>) = (f64::INFINITY, None);
    let mut models = 0;
    for (b, s1, s2, s3) in per.into_iter().flatten() {
        models += 1 + s3.len();
        if s1 > phi1.0 {
            phi1 = (s1, Some(b.clone()));
        }
        if s2 > phi2.0 {
            phi2 = (s2, Some(b.clone()));
        }
        for (xi, v) in s3 {
            let better = v < phi3.0 || (v == phi3.0 && phi3.1.as_ref().is_some_and(|w| xi < *w));
            if better {
                phi3 = (v, Some(xi));
            }
        }
    }
    Ok(PhiStatistics {
        phi1: PhiResult { fired: phi1.0 > t1, extremum: phi1.0, threshold: t1, witness: phi1.1 },
        phi2: PhiResult { fired: phi2.0 > t2, extremum: phi2.0, threshold: t2, witness: phi2.1 },
        phi3: PhiResult { fired: phi3.0 < t3, extremum: phi3.0, threshold: t3, witness: phi3.1 },
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, CoefficientSpec, DesignSpec};
    use crate::rng::{derive_seed, stream};
    use crate::special::chi2_cdf;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn inst(n: usize, p: usize, s: usize, mag: f64, design: DesignSpec, seed: u64) -> ProblemInstance {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: mag };
        generate_instance(n, p, s, &sig, 1.0, design, seed).unwrap()
    }

    #[test]
    fn noiseless_response_fires_the_variance_test() {
        let mut i = inst(100, 8, 2, 1.0, DesignSpec::IidGaussian, 1);
        let gt = i.truth.clone().unwrap();
        i.y = &i.x * &gt.beta_star;
        let c = RegularityConstants::default();
        let phi = phi_statistics(&i, &c, 1.0, 1_000_000, Exec::Sequential).unwrap();
        assert!((phi.phi1.extremum - 1.0).abs() < 1e-9);
        assert_eq!(phi.phi1.fired, 1.0 > phi.phi1.threshold);
        assert!(phi.phi2.extremum < 1e-9);
    }

    #[test]
    fn deterministic_and_strategy_free() {
        let i = inst(60, 9, 2, 0.5, DesignSpec::Equicorrelated { rho: 0.3 }, 2);
        let c = RegularityConstants::default();
        let a = phi_statistics(&i, &c, 0.5, 1_000_000, Exec::Sequential).unwrap();
        let b = phi_statistics(&i, &c, 0.5, 1_000_000, Exec::Parallel).unwrap();
        let again = phi_statistics(&i, &c, 0.5, 1_000_000, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, again);
        // 1 + 7 + 21 + 35 + 35 extras with the truth, times 3 proper subsets
        assert_eq!(a.models, 99 * 4);
    }

    #[test]
    fn projected_noise_matches_chi_square() {
        // beta* = 0 with xi* = {1} and no overfit allowed: the statistic is
        // sigma* |chi_1|
        let base = inst(100, 10, 1, 1.0, DesignSpec::IidGaussian, 3);
        let c = RegularityConstants { k: 0.0, m3: 1.0, ..Default::default() };
        let xi = ModelIndex::new(vec![0]).unwrap();
        let zero = DVector::zeros(10);
        let draws = 1000;
        let mut fired = 0;
        for d in 0..draws {
            let mut rng = stream(derive_seed(17, &[d]));
            let y = DVector::from_fn(100, |_, _| rng.sample::<f64, _>(StandardNormal));
            let phi = phi_statistics_from(&base.x, &y, &xi, &zero, 1.0, &c, 1.0, 1000, Exec::Sequential).unwrap();
            fired += phi.phi3.fired as usize;
        }
        let eps2 = (10f64).ln() / 100.0;
        let q = chi2_cdf(1.0, c.m3 * c.m3 * 100.0 * eps2 / 4.0);
        let f = fired as f64 / draws as f64;
        let se = (q * (1.0 - q) / draws as f64).sqrt();
        assert!((f - q).abs() <= 3.0 * se, "{f} vs {q}");
    }

    #[test]
    fn strong_signal_on_orthogonal_design_never_fires_phi3() {
        let c = RegularityConstants::default();
        let mut zeros = 0;
        for seed in 0..100 {
            let n = 100;
            let p = 10;
            let mag = 10.0 * ((p as f64).ln() / n as f64).sqrt();
            let i = inst(n, p, 2, mag, DesignSpec::Orthogonal, seed);
            let phi = phi_statistics(&i, &c, 1.0, 1_000_000, Exec::Sequential).unwrap();
            zeros += (!phi.phi3.fired) as usize;
        }
        assert!(zeros >= 99, "{zeros}");
    }

    #[test]
    fn budget_is_enforced() {
        let i = inst(60, 30, 2, 0.5, DesignSpec::IidGaussian, 4);
        let c = RegularityConstants::default();
        assert!(matches!(phi_statistics(&i, &c, 1.0, 1000, Exec::Sequential), Err(Error::BudgetExceeded { .. })));
    }
}

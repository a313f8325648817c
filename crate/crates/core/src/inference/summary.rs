use nalgebra::DVector;
use serde::Serialize;

use super::evidence::{Collapsed, SuffStats};
use super::exact::ModelPosterior;
use super::mcmc::{effective_sample_size, Chain};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::model::{epsilon_n, GroundTruth, ModelIndex, ProblemInstance, RegularityConstants};
use crate::priors::PriorSpec;
use crate::rng::{derive_seed, stream};

pub enum PosteriorSource<'a> {
    Exact(&'a ModelPosterior),
    Chain(&'a Chain),
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryOptions {
    /// Conditional draws of `(sigma^2, beta)` within each enumerated model.
    pub draws_per_model: usize,
    pub seed: u64,
    /// Enumerated models below this mass are skipped.
    pub min_mass: f64,
    pub exec: Exec,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self { draws_per_model: 1000, seed: 0, min_mass: 1e-12, exec: Exec::default() }
    }
}

/// Posterior probabilities of the good-parameter sets and their clauses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub prob_true_model: f64,
    pub sigma_clause: f64,
    pub size_clause: f64,
    pub supset_clause: f64,
    pub spike_clause: f64,
    /// `||beta - beta*|| <= radius`.
    pub l2_clause: f64,
    /// `||beta_xi - beta*_xi|| <= radius`.
    pub l2_model_clause: f64,
    pub theta_hat: f64,
    pub theta_hat_supset: f64,
    pub theta_tilde: f64,
    pub mean_model_size: f64,
    /// `||E[beta | Y] - beta*||`.
    pub mean_l2_error: f64,
    #[serde(skip)]
    pub posterior_mean: DVector<f64>,
    pub epsilon_n: f64,
    pub radius: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub overfit_cap: usize,
    /// Retained draws (chains) or conditional draws (exact).
    pub draws: usize,
    pub ess: Option<f64>,
}

/// Thresholds of the clauses at a concrete instance.
struct Targets<'a> {
    gt: &'a GroundTruth,
    lo: f64,
    hi: f64,
    cap: usize,
    radius: f64,
    z0n: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    sigma: f64,
    size: f64,
    supset: f64,
    spike: f64,
    l2: f64,
    l2_model: f64,
    hat: f64,
    hat_supset: f64,
    tilde: f64,
}

impl Tally {
    fn add(&mut self, o: &Tally, w: f64) {
        self.sigma += w * o.sigma;
        self.size += w * o.size;
        self.supset += w * o.supset;
        self.spike += w * o.spike;
        self.l2 += w * o.l2;
        self.l2_model += w * o.l2_model;
        self.hat += w * o.hat;
        self.hat_supset += w * o.hat_supset;
        self.tilde += w * o.tilde;
    }
}

impl<'a> Targets<'a> {
    fn new(inst: &'a ProblemInstance, consts: &RegularityConstants, lambda: f64, z0n: f64) -> Result<(Self, f64)> {
        let gt = inst.truth()?;
        if !(lambda >= 0.0) || !(z0n >= 0.0) {
            return invalid(format!("lambda and z0n must be nonnegative (lambda={lambda}, z0n={z0n})"));
        }
        // an empty truth is scored as if it had one coefficient
        let s = gt.s().max(1);
        let eps = epsilon_n(inst.n(), inst.p(), s)?;
        let (lo, hi) = sigma_interval(consts.m1, eps);
        let radius = if lambda > 0.0 { consts.m2 * gt.sigma_star * eps / lambda.sqrt() } else { f64::INFINITY };
        Ok((Self { gt, lo, hi, cap: consts.overfit_cap(s), radius, z0n }, eps))
    }

    fn evaluate(&self, xi: &ModelIndex, s2: f64, beta: &DVector<f64>) -> Tally {
        let b = |v: bool| v as u8 as f64;
        let ratio = s2 / (self.gt.sigma_star * self.gt.sigma_star);
        let sigma = ratio >= self.lo && ratio <= self.hi;
        let size = xi.difference(&self.gt.xi_star).len() <= self.cap;
        let supset = xi.is_superset_of(&self.gt.xi_star);
        let bound = s2.sqrt() * self.z0n;
        let spike = (0..beta.len()).filter(|&j| !xi.contains(j)).all(|j| beta[j].abs() <= bound);
        let l2 = (beta - &self.gt.beta_star).norm() <= self.radius;
        let l2_model =
            xi.members().iter().map(|&j| (beta[j] - self.gt.beta_star[j]).powi(2)).sum::<f64>().sqrt() <= self.radius;
        let hat = sigma && size && spike && l2;
        Tally {
            sigma: b(sigma),
            size: b(size),
            supset: b(supset),
            spike: b(spike),
            l2: b(l2),
            l2_model: b(l2_model),
            hat: b(hat),
            hat_supset: b(hat && supset),
            tilde: b(sigma && size && supset && spike && l2_model),
        }
    }
}

/// Interval `[(1 - M1 eps)/(1 + M1 eps), (1 + M1 eps)/(1 - M1 eps)]` for
/// `sigma^2/sigma*^2`; the whole half-line once `M1 eps >= 1`.
pub fn sigma_interval(m1: f64, eps: f64) -> (f64, f64) {
    let d = m1 * eps;
    if d >= 1.0 {
        (0.0, f64::INFINITY)
    } else {
        ((1.0 - d) / (1.0 + d), (1.0 + d) / (1.0 - d))
    }
}

/// Posterior probabilities of every clause of the contraction and
/// overfitted-selection sets, with the true-model probability.
///
/// `lambda` scales the l2 radius `M2 sigma* eps_n / sqrt(lambda)`; `z0n`
/// bounds the off-model coordinates in units of `sigma`.
pub fn summarize(
    source: PosteriorSource<'_>,
    inst: &ProblemInstance,
    prior: &PriorSpec,
    consts: &RegularityConstants,
    lambda: f64,
    z0n: f64,
    opts: &SummaryOptions,
) -> Result<PosteriorSummary> {
    let (targets, eps) = Targets::new(inst, consts, lambda, z0n)?;
    let (gt, lo, hi, radius) = (targets.gt, targets.lo, targets.hi, targets.radius);
    let p = inst.p();

    let (tally, prob_true, mean_size, mean, draws, ess) = match source {
        PosteriorSource::Chain(chain) => {
            if chain.draws.is_empty() {
                return invalid("chain has no retained draws");
            }
            let w = 1.0 / chain.draws.len() as f64;
            let mut t = Tally::default();
            let mut mean = DVector::zeros(p);
            let mut hits = 0usize;
            for d in &chain.draws {
                t.add(&targets.evaluate(&d.xi, d.sigma2, &d.beta), w);
                mean += &d.beta * w;
                hits += (d.xi == gt.xi_star) as usize;
            }
            let trace = chain.size_trace();
            let size = trace.iter().sum::<f64>() * w;
            let ess = effective_sample_size(&trace);
            (t, hits as f64 * w, size, mean, chain.draws.len(), Some(ess))
        }
        PosteriorSource::Exact(post) => {
            if opts.draws_per_model == 0 {
                return invalid("conditional Monte Carlo needs at least one draw per model");
            }
            let stats = SuffStats::from_instance(inst);
            let kept: Vec<(usize, f64)> = post
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.full_rank && e.mass >= opts.min_mass)
                .map(|(i, e)| (i, e.mass))
                .collect();
            let per_model = opts.exec.map(kept.clone(), |(i, _)| -> Result<(Tally, DVector<f64>)> {
                let xi = &post.entries[i].model;
                let col = Collapsed::for_model(&stats, prior, xi)?;
                let mut rng = stream(derive_seed(opts.seed, &[i as u64]));
                let mut t = Tally::default();
                let w = 1.0 / opts.draws_per_model as f64;
                for _ in 0..opts.draws_per_model {
                    let (s2, beta) = col.draw(&prior.variance, p, &mut rng);
                    t.add(&targets.evaluate(xi, s2, &beta), w);
                }
                let mut mean = DVector::zeros(p);
                for (r, &j) in col.active.iter().enumerate() {
                    mean[j] = col.mean[r];
                }
                Ok((t, mean))
            });
            let mut t = Tally::default();
            let mut mean = DVector::zeros(p);
            let mut size = 0.0;
            for ((i, mass), res) in kept.iter().zip(per_model) {
                let (ti, mi) = res?;
                t.add(&ti, *mass);
                mean += mi * *mass;
                size += *mass * post.entries[*i].model.len() as f64;
            }
            (t, post.mass_of(&gt.xi_star), size, mean, kept.len() * opts.draws_per_model, None)
        }
    };

    let clamp = |v: f64| v.clamp(0.0, 1.0);
    Ok(PosteriorSummary {
        prob_true_model: clamp(prob_true),
        sigma_clause: clamp(tally.sigma),
        size_clause: clamp(tally.size),
        supset_clause: clamp(tally.supset),
        spike_clause: clamp(tally.spike),
        l2_clause: clamp(tally.l2),
        l2_model_clause: clamp(tally.l2_model),
        theta_hat: clamp(tally.hat),
        theta_hat_supset: clamp(tally.hat_supset),
        theta_tilde: clamp(tally.tilde),
        mean_model_size: mean_size,
        mean_l2_error: (&mean - &gt.beta_star).norm(),
        posterior_mean: mean,
        epsilon_n: eps,
        radius,
        sigma_lo: lo,
        sigma_hi: hi,
        overfit_cap: targets.cap,
        draws,
        ess,
    })
}

/// Conditional posterior probability of the overfitted-selection set
/// given the model, by `draws` conditional draws of `(sigma^2, beta)`.
#[allow(clippy::too_many_arguments)]
pub fn theta_tilde_given_model(
    stats: &SuffStats,
    inst: &ProblemInstance,
    prior: &PriorSpec,
    xi: &ModelIndex,
    consts: &RegularityConstants,
    lambda: f64,
    z0n: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return invalid("conditional Monte Carlo needs at least one draw");
    }
    let (targets, _) = Targets::new(inst, consts, lambda, z0n)?;
    let col = Collapsed::for_model(stats, prior, xi)?;
    let mut rng = stream(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        let (s2, beta) = col.draw(&prior.variance, inst.p(), &mut rng);
        hits += (targets.evaluate(xi, s2, &beta).tilde > 0.0) as usize;
    }
    Ok(hits as f64 / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{exact_posterior, mcmc_sample, SamplerConfig};
    use crate::model::{generate_instance, CoefficientSpec, DesignSpec};
    use crate::priors::{SlabDist, SpikeDist};

    fn inst(seed: u64) -> ProblemInstance {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 0.8 };
        generate_instance(60, 6, 2, &sig, 1.0, DesignSpec::IidGaussian, seed).unwrap()
    }

    #[test]
    fn interval_degenerates_to_half_line() {
        assert_eq!(sigma_interval(6.0, 0.2), (0.0, f64::INFINITY));
        let (lo, hi) = sigma_interval(2.0, 0.1);
        assert!((lo - 0.8 / 1.2).abs() < 1e-15 && (hi - 1.2 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn dirac_spike_clause_is_certain_and_sets_nest() {
        let i = inst(1);
        let prior = PriorSpec::default();
        let c = RegularityConstants::default();
        let post = exact_posterior(&i, &prior, 6, 1000, Exec::Sequential).unwrap();
        let opts = SummaryOptions { draws_per_model: 200, ..SummaryOptions::default() };
        let e = summarize(PosteriorSource::Exact(&post), &i, &prior, &c, 0.5, 0.0, &opts).unwrap();
        assert!((e.spike_clause - 1.0).abs() < 1e-9);
        assert!(e.theta_hat_supset <= e.theta_tilde + 1e-12);
        assert!(e.theta_tilde <= e.supset_clause + 1e-12);
        assert!(e.theta_hat <= e.l2_clause + 1e-12);

        let cfg = SamplerConfig { sweeps: 800, burn_in: 100, ..SamplerConfig::default() };
        let chain = mcmc_sample(&i, &prior, &cfg).unwrap();
        let m = summarize(PosteriorSource::Chain(&chain), &i, &prior, &c, 0.5, 0.0, &opts).unwrap();
        assert_eq!(m.spike_clause, 1.0);
        assert!(m.theta_hat_supset <= m.theta_tilde);
        assert!(m.ess.unwrap() > 0.0);
        assert!((m.prob_true_model - e.prob_true_model).abs() < 0.1);
    }

    #[test]
    fn exact_mean_matches_long_chain() {
        let i = inst(2);
        let prior = PriorSpec::default();
        let c = RegularityConstants::default();
        let post = exact_posterior(&i, &prior, 6, 1000, Exec::Sequential).unwrap();
        let opts = SummaryOptions { draws_per_model: 50, ..SummaryOptions::default() };
        let e = summarize(PosteriorSource::Exact(&post), &i, &prior, &c, 1.0, 0.0, &opts).unwrap();
        let cfg = SamplerConfig { sweeps: 6000, burn_in: 500, seed: 3, ..SamplerConfig::default() };
        let chain = mcmc_sample(&i, &prior, &cfg).unwrap();
        let m = summarize(PosteriorSource::Chain(&chain), &i, &prior, &c, 1.0, 0.0, &opts).unwrap();
        assert!((&e.posterior_mean - &m.posterior_mean).amax() < 0.05);
    }

    #[test]
    fn continuous_spike_clause_is_probabilistic() {
        let i = inst(3);
        let prior = PriorSpec {
            spike: SpikeDist::Gaussian { scale: 0.01 },
            slab: SlabDist::Gaussian { scale: 1.0 },
            ..PriorSpec::default()
        };
        let c = RegularityConstants::default();
        let z0n = crate::priors::compute_z0n(&prior.spike, i.n()).unwrap();
        let post = exact_posterior(&i, &prior, 6, 1000, Exec::Sequential).unwrap();
        let opts = SummaryOptions { draws_per_model: 100, ..SummaryOptions::default() };
        let e = summarize(PosteriorSource::Exact(&post), &i, &prior, &c, 1.0, z0n, &opts).unwrap();
        assert!(e.spike_clause > 0.99);
        let tight = summarize(PosteriorSource::Exact(&post), &i, &prior, &c, 1.0, 1e-6, &opts).unwrap();
        assert!(tight.spike_clause < 0.01);
    }

    #[test]
    fn requires_truth() {
        let mut i = inst(4);
        let post = exact_posterior(&i, &PriorSpec::default(), 2, 1000, Exec::Sequential).unwrap();
        i.truth = None;
        let r = summarize(
            PosteriorSource::Exact(&post),
            &i,
            &PriorSpec::default(),
            &RegularityConstants::default(),
            1.0,
            0.0,
            &SummaryOptions::default(),
        );
        assert!(matches!(r, Err(crate::Error::MissingGroundTruth)));
    }
}

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp, InverseGaussian};
use serde::{Deserialize, Serialize};

use super::evidence::{Collapsed, SuffStats};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelIndex, ProblemInstance};
use crate::priors::{PriorSpec, SlabDist, SpikeDist};
use crate::rng::{stream, StreamRng};

/// Proposal mix over model moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveWeights {
    pub add: f64,
    pub delete: f64,
    pub swap: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        Self { add: 1.0 / 3.0, delete: 1.0 / 3.0, swap: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Total sweeps, burn-in included.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Keep every `thinning`-th post-burn-in sweep.
    pub thinning: usize,
    pub weights: MoveWeights,
    pub seed: u64,
    /// Model moves per sweep; `None` means one per covariate.
    pub moves_per_sweep: Option<usize>,
    /// Starting model; the empty model when absent.
    pub init: Option<ModelIndex>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sweeps: 2000,
            burn_in: 500,
            thinning: 1,
            weights: MoveWeights::default(),
            seed: 0,
            moves_per_sweep: None,
            init: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.add, w.delete, w.swap].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("move weights must be finite and nonnegative");
        }
        if ((w.add + w.delete + w.swap) - 1.0).abs() > 1e-9 {
            return invalid(format!("move weights must sum to 1, got {}", w.add + w.delete + w.swap));
        }
        if (w.add > 0.0) != (w.delete > 0.0) {
            return invalid("add and delete moves must both be enabled or both disabled");
        }
        if self.burn_in >= self.sweeps {
            return invalid(format!("burn-in ({}) must be below sweeps ({})", self.burn_in, self.sweeps));
        }
        if self.thinning == 0 {
            return invalid("thinning must be at least 1");
        }
        if self.moves_per_sweep == Some(0) {
            return invalid("moves per sweep must be positive");
        }
        Ok(())
    }
}

/// One retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub xi: ModelIndex,
    pub sigma2: f64,
    pub beta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub p: usize,
    pub draws: Vec<Draw>,
    pub proposals: u64,
    pub accepted: u64,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// Visit frequency of each model among the retained draws.
    pub fn model_frequencies(&self) -> BTreeMap<ModelIndex, f64> {
        let mut counts: BTreeMap<ModelIndex, usize> = BTreeMap::new();
        for d in &self.draws {
            *counts.entry(d.xi.clone()).or_default() += 1;
        }
        let total = self.draws.len() as f64;
        counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect()
    }

    pub fn size_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.xi.len() as f64).collect()
    }
}

/// Geyer initial-positive-sequence effective sample size.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / gamma0;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n / 2 {
        let pair = acf(2 * m) + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// Latent variance scales of the Laplace components, `beta_j | sigma, w ~
/// N(0, sigma^2 w)` with `w ~ Exp(rho^2/2)`.
#[derive(Debug, Clone)]
pub(crate) struct Latents {
    spike: Vec<f64>,
    slab: Vec<f64>,
}

impl Latents {
    #[cfg(test)]
    pub(crate) fn unit(p: usize) -> Self {
        Self { spike: vec![1.0; p], slab: vec![1.0; p] }
    }
}

pub(crate) struct Sampler<'a> {
    inst: &'a ProblemInstance,
    prior: &'a PriorSpec,
    stats: SuffStats,
    ln_table: Vec<f64>,
    weights: MoveWeights,
    conjugate: bool,
    evidence: HashMap<ModelIndex, Option<f64>>,
    rank: HashMap<ModelIndex, bool>,
}

enum Move {
    Add,
    Delete,
    Swap,
}

impl<'a> Sampler<'a> {
    #[cfg(test)]
    pub(crate) fn new(inst: &'a ProblemInstance, prior: &'a PriorSpec, weights: MoveWeights) -> Self {
        Self::with_stats(inst, prior, weights, SuffStats::from_instance(inst))
    }

    pub(crate) fn with_stats(
        inst: &'a ProblemInstance,
        prior: &'a PriorSpec,
        weights: MoveWeights,
        stats: SuffStats,
    ) -> Self {
        Self {
            inst,
            prior,
            ln_table: prior.selection.ln_mass_table(inst.p()),
            stats,
            weights,
            conjugate: prior.is_conjugate(),
            evidence: HashMap::new(),
            rank: HashMap::new(),
        }
    }

    fn full_rank(&mut self, xi: &ModelIndex) -> bool {
        if let Some(&r) = self.rank.get(xi) {
            return r;
        }
        let r = self.stats.full_rank(&self.inst.x, xi);
        self.rank.insert(xi.clone(), r);
        r
    }

    fn collapsed(&self, xi: &ModelIndex, lat: &Latents) -> Result<Collapsed> {
        if self.conjugate {
            return Collapsed::for_model(&self.stats, self.prior, xi);
        }
        let p = self.stats.p;
        let slab_var = |j: usize| match self.prior.slab {
            SlabDist::Gaussian { scale } => scale * scale,
            SlabDist::Laplace { .. } => lat.slab[j],
        };
        let (active, v): (Vec<usize>, Vec<f64>) = match self.prior.spike {
            SpikeDist::Dirac => xi.members().iter().map(|&j| (j, slab_var(j))).unzip(),
            spike => (0..p)
                .map(|j| {
                    let v = if xi.contains(j) {
                        slab_var(j)
                    } else {
                        match spike {
                            SpikeDist::Gaussian { scale } => scale * scale,
                            _ => lat.spike[j],
                        }
                    };
                    (j, v)
                })
                .unzip(),
        };
        Collapsed::new(&self.stats, active, &v, &self.prior.variance)
    }

    /// `log pi(xi) + log m(Y | xi, latents)`, `None` outside the full-rank set.
    fn ln_target(&mut self, xi: &ModelIndex, lat: &Latents) -> Result<Option<f64>> {
        if self.conjugate {
            if let Some(&v) = self.evidence.get(xi) {
                return Ok(v.map(|m| m + self.ln_table[xi.len()]));
            }
        }
        if !self.full_rank(xi) {
            if self.conjugate {
                self.evidence.insert(xi.clone(), None);
            }
            return Ok(None);
        }
        let m = self.collapsed(xi, lat)?.ln_evidence;
        if self.conjugate {
            self.evidence.insert(xi.clone(), Some(m));
        }
        Ok(Some(m + self.ln_table[xi.len()]))
    }

    /// Proposed model and log Hastings correction; `None` is a self-loop.
    fn propose(&self, xi: &ModelIndex, rng: &mut StreamRng) -> Option<(ModelIndex, f64)> {
        let p = self.stats.p;
        let k = xi.len();
        let w = self.weights;
        let u: f64 = rng.random();
        let mv = if u < w.add {
            Move::Add
        } else if u < w.add + w.delete {
            Move::Delete
        } else {
            Move::Swap
        };
        match mv {
            Move::Add if k < p => {
                let j = self.pick_outside(xi, rng);
                let ln_q = (w.delete / (k + 1) as f64).ln() - (w.add / (p - k) as f64).ln();
                Some((xi.with(j), ln_q))
            }
            Move::Delete if k > 0 => {
                let j = xi.members()[rng.random_range(0..k)];
                let ln_q = (w.add / (p - k + 1) as f64).ln() - (w.delete / k as f64).ln();
                Some((xi.without(j), ln_q))
            }
            Move::Swap if k > 0 && k < p => {
                let out = xi.members()[rng.random_range(0..k)];
                let inn = self.pick_outside(xi, rng);
                Some((xi.without(out).with(inn), 0.0))
            }
            _ => None,
        }
    }

    fn pick_outside(&self, xi: &ModelIndex, rng: &mut StreamRng) -> usize {
        let p = self.stats.p;
        if 2 * xi.len() <= p {
            loop {
                let j = rng.random_range(0..p);
                if !xi.contains(j) {
                    return j;
                }
            }
        }
        let free = xi.complement(p);
        free[rng.random_range(0..free.len())]
    }

    /// One Metropolis-Hastings update of the model. Returns whether the
    /// proposal was accepted, `None` for a self-loop proposal.
    pub(crate) fn model_step(
        &mut self,
        xi: &mut ModelIndex,
        current: &mut f64,
        lat: &Latents,
        rng: &mut StreamRng,
    ) -> Result<Option<bool>> {
        let Some((cand, ln_q)) = self.propose(xi, rng) else {
            return Ok(None);
        };
        let Some(target) = self.ln_target(&cand, lat)? else {
            return Ok(Some(false));
        };
        let ln_alpha = target - *current + ln_q;
        let accept = ln_alpha >= 0.0 || rng.random::<f64>().ln() < ln_alpha;
        if accept {
            *xi = cand;
            *current = target;
        }
        Ok(Some(accept))
    }
}

fn laplace_rate(prior: &PriorSpec) -> (Option<f64>, Option<f64>) {
    let spike = match prior.spike {
        SpikeDist::Laplace { scale } => Some(scale),
        _ => None,
    };
    let slab = match prior.slab {
        SlabDist::Laplace { scale } => Some(scale),
        _ => None,
    };
    (spike, slab)
}

fn latent_prior<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> f64 {
    Exp::new(rho * rho / 2.0).expect("positive rate").sample(rng)
}

fn latent_posterior<R: Rng + ?Sized>(rho: f64, beta: f64, sigma: f64, rng: &mut R) -> f64 {
    // 1/w | beta, sigma ~ InverseGaussian(rho sigma / |beta|, rho^2)
    let mean = (rho * sigma / beta.abs().max(1e-300)).min(1e300);
    let inv = InverseGaussian::new(mean, rho * rho).expect("positive parameters").sample(rng);
    1.0 / inv.max(1e-300)
}

/// Collapsed Metropolis-within-Gibbs sampler over `(xi, sigma^2, beta)`.
///
/// Each sweep makes `moves_per_sweep` add/delete/swap proposals on the
/// model with `beta` and `sigma^2` integrated out, then draws `sigma^2`
/// and `beta` from their conditionals. Laplace components carry latent
/// Gaussian scales that are refreshed at the end of every sweep.
pub fn mcmc_sample(inst: &ProblemInstance, prior: &PriorSpec, config: &SamplerConfig) -> Result<Chain> {
    mcmc_sample_with(inst, prior, config, SuffStats::from_instance(inst))
}

/// As [`mcmc_sample`], reusing precomputed sufficient statistics.
pub fn mcmc_sample_with(
    inst: &ProblemInstance,
    prior: &PriorSpec,
    config: &SamplerConfig,
    stats: SuffStats,
) -> Result<Chain> {
    prior.validate()?;
    config.validate()?;
    let p = inst.p();
    let mut rng = stream(config.seed);
    let mut sampler = Sampler::with_stats(inst, prior, config.weights, stats);
    let (rho0, rho1) = laplace_rate(prior);
    let mut lat = Latents {
        spike: (0..p).map(|_| rho0.map_or(1.0, |r| latent_prior(r, &mut rng))).collect(),
        slab: (0..p).map(|_| rho1.map_or(1.0, |r| latent_prior(r, &mut rng))).collect(),
    };

    let mut xi = config.init.clone().unwrap_or_default();
    xi.check_within(p)?;
    let mut current = sampler.ln_target(&xi, &lat)?.ok_or_else(|| Error::RankDeficient {
        model: xi.to_string(),
        rank: crate::model::is_full_rank(&inst.x, &xi).rank,
        size: xi.len(),
    })?;

    let moves = config.moves_per_sweep.unwrap_or(p);
    let keep = (config.sweeps - config.burn_in).div_ceil(config.thinning);
    let mut draws = Vec::with_capacity(keep);
    let (mut proposals, mut accepted) = (0_u64, 0_u64);
    for sweep in 0..config.sweeps {
        for _ in 0..moves {
            if let Some(acc) = sampler.model_step(&mut xi, &mut current, &lat, &mut rng)? {
                proposals += 1;
                accepted += acc as u64;
            }
        }
        let col = sampler.collapsed(&xi, &lat)?;
        let (s2, beta) = col.draw(&prior.variance, p, &mut rng);
        if rho0.is_some() || rho1.is_some() {
            let sigma = s2.sqrt();
            for j in 0..p {
                let on = xi.contains(j);
                if let Some(r) = rho1 {
                    lat.slab[j] =
                        if on { latent_posterior(r, beta[j], sigma, &mut rng) } else { latent_prior(r, &mut rng) };
                }
                if let Some(r) = rho0 {
                    lat.spike[j] =
                        if on { latent_prior(r, &mut rng) } else { latent_posterior(r, beta[j], sigma, &mut rng) };
                }
            }
            // the collapsed target depends on the latents
            current = sampler.ln_target(&xi, &lat)?.expect("current model is full rank");
        }
        if sweep >= config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thinning) {
            draws.push(Draw { xi: xi.clone(), sigma2: s2, beta });
        }
    }
    Ok(Chain { p, draws, proposals, accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, CoefficientSpec, DesignSpec};

    fn inst(n: usize, p: usize, s: usize, mag: f64, seed: u64) -> ProblemInstance {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: mag };
        generate_instance(n, p, s, &sig, 1.0, DesignSpec::IidGaussian, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = SamplerConfig::default();
        assert!(ok.validate().is_ok());
        let bad = SamplerConfig { burn_in: 2000, ..ok.clone() };
        assert!(bad.validate().is_err());
        let w = MoveWeights { add: 0.5, delete: 0.0, swap: 0.5 };
        assert!(SamplerConfig { weights: w, ..ok.clone() }.validate().is_err());
        let w = MoveWeights { add: 0.5, delete: 0.6, swap: 0.0 };
        assert!(SamplerConfig { weights: w, ..ok }.validate().is_err());
    }

    #[test]
    fn same_seed_same_chain() {
        let i = inst(40, 6, 2, 0.8, 1);
        let cfg = SamplerConfig { sweeps: 300, burn_in: 50, seed: 9, ..SamplerConfig::default() };
        let a = mcmc_sample(&i, &PriorSpec::default(), &cfg).unwrap();
        let b = mcmc_sample(&i, &PriorSpec::default(), &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.draws.len(), 250);
    }

    #[test]
    fn dirac_chain_keeps_exact_zeros() {
        let i = inst(40, 6, 2, 0.8, 2);
        let cfg = SamplerConfig { sweeps: 200, burn_in: 20, thinning: 3, ..SamplerConfig::default() };
        let chain = mcmc_sample(&i, &PriorSpec::default(), &cfg).unwrap();
        assert_eq!(chain.draws.len(), 60);
        for d in &chain.draws {
            for j in 0..6 {
                if !d.xi.contains(j) {
                    assert_eq!(d.beta[j], 0.0);
                }
            }
            assert!(d.sigma2 > 0.0);
        }
    }

    #[test]
    fn laplace_components_run() {
        let i = inst(50, 5, 1, 1.5, 3);
        let prior = PriorSpec {
            spike: SpikeDist::Laplace { scale: 20.0 },
            slab: SlabDist::Laplace { scale: 1.0 },
            ..PriorSpec::default()
        };
        let cfg = SamplerConfig { sweeps: 400, burn_in: 100, ..SamplerConfig::default() };
        let chain = mcmc_sample(&i, &prior, &cfg).unwrap();
        let freq = chain.model_frequencies();
        let truth = &i.truth.as_ref().unwrap().xi_star;
        let hit: f64 = freq.iter().filter(|(m, _)| m.is_superset_of(truth)).map(|(_, f)| f).sum();
        assert!(hit > 0.9, "{hit}");
        assert!(chain.draws.iter().all(|d| d.beta.iter().all(|b| b.is_finite())));
    }

    #[test]
    fn rank_deficient_proposals_are_rejected() {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
        let i = generate_instance(30, 3, 1, &sig, 1.0, DesignSpec::DuplicateColumnDemo, 4).unwrap();
        let cfg = SamplerConfig { sweeps: 500, burn_in: 10, ..SamplerConfig::default() };
        let chain = mcmc_sample(&i, &PriorSpec::default(), &cfg).unwrap();
        assert!(chain.draws.iter().all(|d| !(d.xi.contains(0) && d.xi.contains(1))));
    }

    #[test]
    fn ess_of_iid_and_sticky_traces() {
        let mut rng = stream(5);
        let iid: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let e = effective_sample_size(&iid);
        assert!(e > 3000.0, "{e}");
        let sticky: Vec<f64> = (0..4000).map(|i| ((i / 100) % 2) as f64).collect();
        assert!(effective_sample_size(&sticky) < 200.0);
    }

    #[test]
    fn swap_flow_ratio_matches_evidence_ratio() {
        // balance: pi(a) P(a -> b) = pi(b) P(b -> a)
        let i = inst(30, 4, 1, 0.2, 12);
        let prior = PriorSpec::default();
        let w = MoveWeights { add: 0.0, delete: 0.0, swap: 1.0 };
        let mut sampler = Sampler::new(&i, &prior, w);
        let lat = Latents::unit(4);
        let a = ModelIndex::new(vec![1]).unwrap();
        let b = ModelIndex::new(vec![2]).unwrap();
        let ta = sampler.ln_target(&a, &lat).unwrap().unwrap();
        let tb = sampler.ln_target(&b, &lat).unwrap().unwrap();
        let mut rng = stream(77);
        let trials = 100_000;
        let mut flow = |from: &ModelIndex, to: &ModelIndex, t_from: f64| {
            let mut hits = 0_u64;
            for _ in 0..trials {
                let (mut xi, mut cur) = (from.clone(), t_from);
                sampler.model_step(&mut xi, &mut cur, &lat, &mut rng).unwrap();
                hits += (xi == *to) as u64;
            }
            hits as f64 / trials as f64
        };
        let f_ab = flow(&a, &b, ta);
        let f_ba = flow(&b, &a, tb);
        let se = ((1.0 - f_ab) / (trials as f64 * f_ab) + (1.0 - f_ba) / (trials as f64 * f_ba)).sqrt();
        let measured = (f_ab / f_ba).ln();
        assert!((measured - (tb - ta)).abs() <= 3.0 * se, "{measured} vs {} (se {se})", tb - ta);
    }
}

use serde::Serialize;

use super::components::{compute_z0n, slab_floor};
use super::PriorSpec;
use crate::error::{invalid, Result};
use crate::model::{epsilon_n, PremiseReport, ProblemInstance, RegularityConstants};

/// One compared pair: `holds` is the verdict of the stated direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClauseCheck {
    pub value: f64,
    pub reference: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheck {
    pub t: usize,
    /// `sum_{|xi| > t} pi(xi)`
    pub tail: f64,
    /// `p^{-A2 t}`
    pub bound: f64,
    pub holds: bool,
}

/// Finite-sample evaluation of the four prior assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorDiagnostics {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub z0n: f64,
    pub z1n: f64,
    pub slab_floor: f64,
    pub sup_density: f64,
    pub pi_empty: f64,
    pub pi_true: f64,
    /// (a): smallest `log g(sigma^2)` on a log grid over the support; positive
    /// density means finite log density.
    pub variance_positive: ClauseCheck,
    /// (b): `pi(xi*)` against `p^{-A1 s}`.
    pub pi_true_check: ClauseCheck,
    /// (b): `tail(t)` against `p^{-A2 t}` for `t = 1..=t_max`.
    pub tails: Vec<TailCheck>,
    /// (c): `z0n / ((1/p) sqrt(log p / n))`, passing below 1.
    pub spike_ratio: ClauseCheck,
    /// (d): slab floor against `p^{-A3}`.
    pub slab_check: ClauseCheck,
    pub premises: PremiseReport,
}

impl PriorDiagnostics {
    pub fn tails_hold(&self) -> bool {
        self.tails.iter().all(|t| t.holds)
    }
}

const GRID_POINTS: usize = 241;

pub fn audit_assumption1(
    prior: &PriorSpec,
    instance: &ProblemInstance,
    consts: &RegularityConstants,
    t_max: usize,
) -> Result<PriorDiagnostics> {
    prior.validate()?;
    consts.validate()?;
    let gt = instance.truth()?;
    let (n, p, s) = (instance.n(), instance.p(), gt.s());
    if t_max > p {
        return invalid(format!("t_max = {t_max} exceeds p = {p}"));
    }
    let pf = p as f64;

    let (lo, hi) = prior.variance.support();
    let (glo, ghi) = (lo.max(1e-6).ln(), hi.min(1e6).ln());
    let min_ln_density = (0..GRID_POINTS)
        .map(|i| prior.variance.ln_density((glo + (ghi - glo) * i as f64 / (GRID_POINTS - 1) as f64).exp()))
        .fold(f64::INFINITY, f64::min);
    let variance_positive =
        ClauseCheck { value: min_ln_density, reference: f64::NEG_INFINITY, holds: min_ln_density.is_finite() };

    let pi_empty = prior.selection.ln_mass_of_size(0, p).exp();
    let pi_true = prior.selection.ln_mass_of_size(s, p).exp();
    let a1_bound = pf.powf(-consts.a1 * s as f64);
    let pi_true_check = ClauseCheck { value: pi_true, reference: a1_bound, holds: pi_true >= a1_bound };

    let tails = (1..=t_max)
        .map(|t| {
            let tail = prior.selection.tail(t, p);
            let bound = pf.powf(-consts.a2 * t as f64);
            TailCheck { t, tail, bound, holds: tail <= bound }
        })
        .collect();

    let z0n = compute_z0n(&prior.spike, n)?;
    let scale = (pf.ln() / n as f64).sqrt() / pf;
    let ratio = z0n / scale;
    let spike_ratio = ClauseCheck { value: ratio, reference: 1.0, holds: ratio < 1.0 };

    let z1n = gt.max_standardized_signal() + epsilon_n(n, p, s.max(1))?;
    let floor = slab_floor(&prior.slab, z1n)?;
    let a3_bound = pf.powf(-consts.a3);
    let slab_check = ClauseCheck { value: floor, reference: a3_bound, holds: floor >= a3_bound };

    Ok(PriorDiagnostics {
        n,
        p,
        s,
        z0n,
        z1n,
        slab_floor: floor,
        sup_density: prior.slab.sup_density(),
        pi_empty,
        pi_true,
        variance_positive,
        pi_true_check,
        tails,
        spike_ratio,
        slab_check,
        premises: consts.premises(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, CoefficientSpec, DesignSpec};
    use crate::priors::{CsvBase, ModelSelectionPrior, SlabDist, SpikeDist};
    use approx::assert_relative_eq;

    fn instance(p: usize) -> ProblemInstance {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
        generate_instance(60, p, 1, &sig, 1.0, DesignSpec::IidGaussian, 1).unwrap()
    }

    #[test]
    fn bernoulli_tail_fails_at_one() {
        let prior = PriorSpec::default();
        let consts = RegularityConstants { a2: 1.0, ..Default::default() };
        let d = audit_assumption1(&prior, &instance(10), &consts, 3).unwrap();
        assert_relative_eq!(d.tails[0].tail, 0.263_901_1, max_relative = 1e-6);
        assert_relative_eq!(d.tails[0].bound, 0.1, max_relative = 1e-14);
        assert!(!d.tails[0].holds);
        assert_eq!(d.spike_ratio.value, 0.0);
        assert!(d.spike_ratio.holds);
    }

    #[test]
    fn csv_tail_passes() {
        let prior = PriorSpec {
            selection: ModelSelectionPrior::Csv { csv_base: CsvBase::PowerOfP(2.0) },
            ..Default::default()
        };
        let consts = RegularityConstants { a2: 1.9, ..Default::default() };
        let d = audit_assumption1(&prior, &instance(100), &consts, 5).unwrap();
        assert!(d.tails_hold());
        assert!(d.variance_positive.holds);
    }

    #[test]
    fn z1n_uses_the_largest_signal() {
        let prior = PriorSpec {
            spike: SpikeDist::Laplace { scale: 1e4 },
            slab: SlabDist::Laplace { scale: 1.0 },
            ..Default::default()
        };
        let inst = instance(10);
        let d = audit_assumption1(&prior, &inst, &RegularityConstants::default(), 1).unwrap();
        assert_relative_eq!(d.z1n, 1.0 + epsilon_n(60, 10, 1).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(d.slab_floor, 0.5 * (-d.z1n).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.z0n, 60.0 / 1e4, max_relative = 1e-14);
    }
}

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{ln_normal_sf, normal_isf_ln};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Continuous symmetric densities shared by spike and slab. For the Laplace
/// kind `scale` is the inverse scale `rho` in `(rho/2) exp(-rho |z|)`; for
/// the Gaussian kind it is the standard deviation `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    Gaussian(f64),
    Laplace(f64),
}

impl Kernel {
    fn validate(self) -> Result<()> {
        let v = match self {
            Kernel::Gaussian(v) | Kernel::Laplace(v) => v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("component scale must be positive, got {v}"));
        }
        Ok(())
    }

    pub(crate) fn ln_density(self, z: f64) -> f64 {
        match self {
            Kernel::Gaussian(tau) => -0.5 * (z / tau).powi(2) - LN_SQRT_2PI - tau.ln(),
            Kernel::Laplace(rho) => (rho / 2.0).ln() - rho * z.abs(),
        }
    }

    /// `P(|Z| > z)`, in logs.
    fn ln_two_sided_tail(self, z: f64) -> f64 {
        match self {
            Kernel::Gaussian(tau) => std::f64::consts::LN_2 + ln_normal_sf(z / tau),
            Kernel::Laplace(rho) => -rho * z,
        }
    }

    /// `z` with `P(|Z| > z) = e^{-n}`.
    fn tail_quantile(self, n: f64) -> f64 {
        match self {
            Kernel::Gaussian(tau) => tau * normal_isf_ln(-n - std::f64::consts::LN_2),
            Kernel::Laplace(rho) => n / rho,
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Kernel::Gaussian(tau) => Normal::new(0.0, tau).expect("positive sd").sample(rng),
            Kernel::Laplace(rho) => {
                let mag = Exp::new(rho).expect("positive rate").sample(rng);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

/// Spike density `h0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpikeDist {
    Dirac,
    Gaussian { scale: f64 },
    Laplace { scale: f64 },
}

/// Slab density `h1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlabDist {
    Gaussian { scale: f64 },
    Laplace { scale: f64 },
}

impl SpikeDist {
    pub(crate) fn kernel(&self) -> Option<Kernel> {
        match *self {
            SpikeDist::Dirac => None,
            SpikeDist::Gaussian { scale } => Some(Kernel::Gaussian(scale)),
            SpikeDist::Laplace { scale } => Some(Kernel::Laplace(scale)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().map_or(Ok(()), Kernel::validate)
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, SpikeDist::Dirac)
    }

    /// Density of the continuous kinds; `None` for the point mass.
    pub fn density(&self, z: f64) -> Option<f64> {
        self.kernel().map(|k| k.ln_density(z).exp())
    }

    /// `P(|Z| > z)` under `h0`.
    pub fn tail(&self, z: f64) -> f64 {
        match self.kernel() {
            None => 0.0,
            Some(k) => k.ln_two_sided_tail(z).exp(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.kernel().map_or(0.0, |k| k.sample(rng))
    }
}

impl SlabDist {
    pub(crate) fn kernel(&self) -> Kernel {
        match *self {
            SlabDist::Gaussian { scale } => Kernel::Gaussian(scale),
            SlabDist::Laplace { scale } => Kernel::Laplace(scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()
    }

    pub fn density(&self, z: f64) -> f64 {
        self.kernel().ln_density(z).exp()
    }

    pub fn ln_density(&self, z: f64) -> f64 {
        self.kernel().ln_density(z)
    }

    /// `sup_z h1(z)`, attained at the mode.
    pub fn sup_density(&self) -> f64 {
        self.density(0.0)
    }

    /// Lipschitz constant of `log h1` on `[-z1, z1]`.
    pub fn log_lipschitz(&self, z1: f64) -> f64 {
        match *self {
            SlabDist::Gaussian { scale } => z1.abs() / (scale * scale),
            SlabDist::Laplace { scale } => scale,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.kernel().sample(rng)
    }
}

/// Symmetric tail threshold `z0n` with `P(|Z| > z0n) = e^{-n}` under `h0`.
pub fn compute_z0n(spike: &SpikeDist, n: usize) -> Result<f64> {
    if n == 0 {
        return invalid("z0n needs n >= 1");
    }
    spike.validate()?;
    Ok(spike.kernel().map_or(0.0, |k| k.tail_quantile(n as f64)))
}

/// `inf_{|z| <= z1n} h1(z)`; both slab kinds are unimodal and symmetric so
/// the infimum sits at the endpoints.
pub fn slab_floor(slab: &SlabDist, z1n: f64) -> Result<f64> {
    if !(z1n >= 0.0 && z1n.is_finite()) {
        return invalid(format!("z1n must be finite and nonnegative, got {z1n}"));
    }
    slab.validate()?;
    Ok(slab.density(z1n))
}

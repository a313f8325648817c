use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{gamma_interval, ln_gamma_fn};

fn default_shape() -> f64 {
    1.0
}

/// Prior `g(sigma^2)` on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VariancePrior {
    InverseGamma {
        #[serde(default = "default_shape")]
        a: f64,
        #[serde(default = "default_shape")]
        b: f64,
    },
    TruncatedInverseGamma {
        #[serde(default = "default_shape")]
        a: f64,
        #[serde(default = "default_shape")]
        b: f64,
        lo: f64,
        hi: f64,
    },
}

impl Default for VariancePrior {
    fn default() -> Self {
        VariancePrior::InverseGamma { a: 1.0, b: 1.0 }
    }
}

impl VariancePrior {
    pub fn shape_rate(&self) -> (f64, f64) {
        match *self {
            VariancePrior::InverseGamma { a, b } | VariancePrior::TruncatedInverseGamma { a, b, .. } => (a, b),
        }
    }

    /// Support `[lo, hi]` of `sigma^2`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            VariancePrior::InverseGamma { .. } => (0.0, f64::INFINITY),
            VariancePrior::TruncatedInverseGamma { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.shape_rate();
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return invalid(format!("inverse-gamma needs a, b > 0 (got a={a}, b={b})"));
        }
        if let VariancePrior::TruncatedInverseGamma { lo, hi, .. } = *self {
            if !(lo >= 0.0 && hi > lo) {
                return invalid(format!("truncation needs 0 <= lo < hi (got lo={lo}, hi={hi})"));
            }
        }
        Ok(())
    }

    /// `log int_support s^{-(a'+1)} exp(-b'/s) ds`.
    pub fn ln_kernel_integral(&self, a_post: f64, b_post: f64) -> f64 {
        let full = ln_gamma_fn(a_post) - a_post * b_post.ln();
        let (lo, hi) = self.support();
        if lo == 0.0 && hi.is_infinite() {
            return full;
        }
        full + gamma_interval(a_post, b_post / hi, b_post / lo).ln()
    }

    pub fn ln_density(&self, s2: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(s2 > lo && s2 <= hi) && !(s2 == lo && lo > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = self.shape_rate();
        -(a + 1.0) * s2.ln() - b / s2 - self.ln_kernel_integral(a, b)
    }

    pub fn density(&self, s2: f64) -> f64 {
        self.ln_density(s2).exp()
    }

    /// Draw from the density proportional to `s^{-(a'+1)} exp(-b'/s)` on the
    /// support.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, a_post: f64, b_post: f64, rng: &mut R) -> f64 {
        let precision = Gamma::new(a_post, 1.0 / b_post).expect("positive shape and scale");
        let (lo, hi) = self.support();
        for _ in 0..10_000 {
            let s2 = 1.0 / precision.sample(rng);
            if s2 >= lo && s2 <= hi {
                return s2;
            }
        }
        // inverse CDF on the precision scale: G = b'/s2 ~ Gamma(a', 1)
        let (glo, ghi) = (b_post / hi, if lo > 0.0 { b_post / lo } else { f64::INFINITY });
        let total = gamma_interval(a_post, glo, ghi);
        let u: f64 = rng.random::<f64>() * total;
        let (mut l, mut h) = (glo, if ghi.is_finite() { ghi } else { glo.max(a_post) * 10.0 + 100.0 });
        for _ in 0..200 {
            let m = 0.5 * (l + h);
            if gamma_interval(a_post, glo, m) < u {
                l = m;
            } else {
                h = m;
            }
        }
        b_post / (0.5 * (l + h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn integrate(g: &VariancePrior, lo: f64, hi: f64) -> f64 {
        // Simpson on log scale: ds = s du
        let (u0, u1) = (lo.ln(), hi.ln());
        let m = 200_000;
        let h = (u1 - u0) / m as f64;
        let f = |u: f64| {
            let s = u.exp();
            g.density(s) * s
        };
        let mut acc = f(u0) + f(u1);
        for i in 1..m {
            acc += f(u0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        let ig = VariancePrior::InverseGamma { a: 2.0, b: 1.5 };
        assert_relative_eq!(integrate(&ig, 1e-4, 1e7), 1.0, epsilon = 1e-6);
        let tig = VariancePrior::TruncatedInverseGamma { a: 1.0, b: 1.0, lo: 0.1, hi: 5.0 };
        assert_relative_eq!(integrate(&tig, 0.1, 5.0), 1.0, epsilon = 1e-6);
        assert_eq!(tig.density(6.0), 0.0);
    }

    #[test]
    fn truncated_draws_stay_in_support() {
        let mut rng = crate::rng::stream(3);
        let tig = VariancePrior::TruncatedInverseGamma { a: 3.0, b: 1.0, lo: 20.0, hi: 21.0 };
        for _ in 0..50 {
            let s = tig.sample_conditional(3.0, 1.0, &mut rng);
            assert!((20.0..=21.0).contains(&s));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(VariancePrior::InverseGamma { a: 0.0, b: 1.0 }.validate().is_err());
        assert!(VariancePrior::TruncatedInverseGamma { a: 1.0, b: 1.0, lo: 2.0, hi: 1.0 }.validate().is_err());
    }
}

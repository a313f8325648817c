//! Scalar special functions on top of `statrs`, with log-space tails for the
//! extreme quantiles the prior thresholds need.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

pub use statrs::function::factorial::ln_binomial;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log P(Z > z)` for standard normal `Z`, accurate far into the tail.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < 3.0 {
        return (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
    }
    -0.5 * z * z - LN_SQRT_2PI + mills_ratio(z).ln()
}

/// `P(Z > z) / phi(z)` by a Lentz continued fraction, for `z >= 3`.
fn mills_ratio(z: f64) -> f64 {
    // R(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...))))
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..5000 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Upper standard-normal quantile `z` with `log P(Z > z) = ln_mass`.
pub fn normal_isf_ln(ln_mass: f64) -> f64 {
    assert!(ln_mass < 0.0, "tail mass must be below 1");
    let mass = ln_mass.exp();
    let mut z = if mass > 1e-300 { std::f64::consts::SQRT_2 * erfc_inv(2.0 * mass) } else { (-2.0 * ln_mass).sqrt() };
    if z <= 0.0 {
        return z;
    }
    // Newton on the log tail: d/dz log sf = -phi/sf = -1/R(z)
    for _ in 0..50 {
        let g = ln_normal_sf(z) - ln_mass;
        let step = g * mills_ratio(z);
        z += step;
        if step.abs() < 1e-15 * z {
            break;
        }
    }
    z
}

/// `P(chi^2_d >= x)`.
pub fn chi2_sf(d: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if d == 0.0 {
        return 0.0;
    }
    gamma_ur(d / 2.0, x / 2.0)
}

/// `P(chi^2_d <= x)`.
pub fn chi2_cdf(d: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if d == 0.0 {
        return 1.0;
    }
    gamma_lr(d / 2.0, x / 2.0)
}

/// `P(lo <= G <= hi)` for `G ~ Gamma(shape a, rate 1)`, computed from
/// whichever tail keeps the difference well conditioned.
pub fn gamma_interval(a: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let lower = |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x.is_infinite() {
            1.0
        } else {
            gamma_lr(a, x)
        }
    };
    let upper = |x: f64| {
        if x <= 0.0 {
            1.0
        } else if x.is_infinite() {
            0.0
        } else {
            gamma_ur(a, x)
        }
    };
    if lower(lo) > 0.5 {
        (upper(lo) - upper(hi)).max(0.0)
    } else {
        (lower(hi) - lower(lo)).max(0.0)
    }
}

pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

/// `log(sum(exp(v)))`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log C(n, k)` for real-valued bookkeeping; `-inf` when `k > n`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_binomial(n as u64, k as u64)
    }
}

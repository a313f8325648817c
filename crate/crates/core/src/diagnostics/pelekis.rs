use super::BoundComparison;
use crate::error::{invalid, Result};
use crate::special::{ln_choose, log_sum_exp};

/// `P(T >= t)` for `T ~ Binomial(p, mu)`, summed in log space.
pub fn binomial_upper_tail(p: u64, mu: f64, t: u64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    if t > p {
        return 0.0;
    }
    let (lm, l1m) = (mu.ln(), (-mu).ln_1p());
    log_sum_exp((t..=p).map(|k| ln_choose(p as usize, k as usize) + k as f64 * lm + (p - k) as f64 * l1m)).exp()
}

/// The printed binomial tail formula `mu^{2(tt+1)}/2 * C(p, tt+1)/C(t, tt+1)`
/// with `tt = floor((t - p mu)/(1 - mu))`, reported next to the exact tail.
///
/// The verdict is informational: the formula is not an upper bound in
/// general.
pub fn pelekis_bound(p: u64, mu: f64, t: u64) -> Result<BoundComparison> {
    if !(mu > 0.0 && mu < 1.0) {
        return invalid(format!("mu must lie in (0, 1), got {mu}"));
    }
    let pm = p as f64 * mu;
    if !(pm < t as f64 && t < p) {
        return invalid(format!("need p*mu < t <= p - 1 (p={p}, mu={mu}, t={t})"));
    }
    let tt = ((t as f64 - pm) / (1.0 - mu)).floor() as u64;
    let k = (tt + 1) as usize;
    let ln_formula =
        2.0 * k as f64 * mu.ln() - std::f64::consts::LN_2 + ln_choose(p as usize, k) - ln_choose(t as usize, k);
    let exact = binomial_upper_tail(p, mu, t);
    let mut c = BoundComparison::upper(
        "pelekis",
        ln_formula.exp(),
        exact,
        0.0,
        vec![("p", p as f64), ("mu", mu), ("t", t as f64), ("t_tilde", tt as f64)],
    );
    c.asserted = false;
    Ok(c)
}

use super::BoundComparison;
use crate::error::{invalid, Result};
use crate::special::{chi2_cdf, chi2_sf};

const TOL: f64 = 1e-12;

/// `exp(-(sqrt(2t - d) - sqrt(d))^2 / 4)`, defined for `2t >= d`.
pub fn chi2_tail_formula(d: f64, t: f64) -> Result<f64> {
    if !(d >= 0.0 && 2.0 * t >= d) {
        return invalid(format!("formula needs d >= 0 and 2t >= d (d={d}, t={t})"));
    }
    let gap = (2.0 * t - d).sqrt() - d.sqrt();
    Ok((-gap * gap / 4.0).exp())
}

/// Upper-tail bound on `P(chi^2_d >= t)` against the exact tail. Requires
/// `2t > d` strictly.
pub fn chi2_tail_bound(d: u64, t: f64) -> Result<BoundComparison> {
    let df = d as f64;
    if !(2.0 * t > df) || !t.is_finite() {
        return invalid(format!("tail bound needs 2t > d (d={d}, t={t})"));
    }
    let bound = chi2_tail_formula(df, t)?;
    let exact = chi2_sf(df, t);
    Ok(BoundComparison::upper("chi2-tail", bound, exact, TOL, vec![("d", df), ("t", t)]))
}

/// Deviation bounds for `chi^2_{n-d}/n` around one: the upper tail at
/// `1 + eps` and the lower tail at `1 - eps`. Requires `n eps > d`.
pub fn chi2_norm_bounds(n: u64, d: u64, eps: f64) -> Result<(BoundComparison, BoundComparison)> {
    let (nf, df) = (n as f64, d as f64);
    if d >= n {
        return invalid(format!("need d < n (n={n}, d={d})"));
    }
    if !(nf * eps > df) || !eps.is_finite() {
        return invalid(format!("norm bounds need n*eps > d (n={n}, d={d}, eps={eps})"));
    }
    let dof = nf - df;
    let up = nf * eps + df;
    let lo = nf * eps - df;
    let upper_bound = (-(up * up / (8.0 * dof)).min(up / 8.0)).exp();
    let lower_bound = (-(lo * lo / (8.0 * dof)).min(lo / 8.0)).exp();
    let ctx = vec![("n", nf), ("d", df), ("eps", eps)];
    Ok((
        BoundComparison::upper("chi2-norm-upper", upper_bound, chi2_sf(dof, nf * (1.0 + eps)), TOL, ctx.clone()),
        BoundComparison::upper("chi2-norm-lower", lower_bound, chi2_cdf(dof, nf * (1.0 - eps)), TOL, ctx),
    ))
}

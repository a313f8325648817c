use std::collections::BTreeMap;

use serde::Serialize;

use super::config::BoundRequest;
use crate::diagnostics::{
    chi2_norm_bounds, chi2_tail_bound, omega_event_frequency, pelekis_bound, posterior_ratio_bound, selection_rate,
    BoundComparison, SizeMassReading,
};
use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::model::{generate_instance, CoefficientSpec, DesignSpec, RegularityConstants};
use crate::priors::PriorSpec;

/// One bound evaluation: its inputs, both sides and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub check: String,
    /// `key=value` pairs separated by `;`.
    pub inputs: String,
    pub bound: Option<f64>,
    pub exact: Option<f64>,
    pub tolerance: Option<f64>,
    pub holds: Option<bool>,
    pub asserted: Option<bool>,
    /// `holds`, `violated`, `fails-unasserted` or `value`.
    pub verdict: &'static str,
    pub status: &'static str,
    pub error: String,
}

impl BoundRow {
    fn from_comparison(c: &BoundComparison, inputs: &str) -> Self {
        let verdict = match (c.holds, c.asserted) {
            (true, _) => "holds",
            (false, true) => "violated",
            (false, false) => "fails-unasserted",
        };
        Self {
            check: c.check.clone(),
            inputs: inputs.to_string(),
            bound: Some(c.bound),
            exact: Some(c.exact),
            tolerance: Some(c.tolerance),
            holds: Some(c.holds),
            asserted: Some(c.asserted),
            verdict,
            status: "ok",
            error: String::new(),
        }
    }

    fn value(check: &str, inputs: &str, bound: f64) -> Self {
        Self {
            check: check.to_string(),
            inputs: inputs.to_string(),
            bound: Some(bound),
            exact: None,
            tolerance: None,
            holds: None,
            asserted: None,
            verdict: "value",
            status: "ok",
            error: String::new(),
        }
    }

    fn failed(check: &str, inputs: &str, e: &Error) -> Self {
        Self { bound: None, status: "error", error: e.to_string(), ..Self::value(check, inputs, 0.0) }
    }
}

/// Parse `k=v,k=v` into numeric parameters.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got '{part}'")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("'{v}' is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
}

impl Params<'_> {
    fn real(&self, k: &str) -> Result<f64> {
        self.map.get(k).copied().ok_or_else(|| Error::InvalidArgument(format!("missing parameter '{k}'")))
    }

    fn real_or(&self, k: &str, default: f64) -> f64 {
        self.map.get(k).copied().unwrap_or(default)
    }

    fn count(&self, k: &str) -> Result<u64> {
        let v = self.real(k)?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return invalid(format!("parameter '{k}' must be a nonnegative integer, got {v}"));
        }
        Ok(v as u64)
    }

    fn count_or(&self, k: &str, default: u64) -> Result<u64> {
        if self.map.contains_key(k) {
            self.count(k)
        } else {
            Ok(default)
        }
    }
}

fn evaluate(
    req: &BoundRequest,
    prior: &PriorSpec,
    consts: &RegularityConstants,
    exec: Exec,
    inputs: &str,
) -> Result<Vec<BoundRow>> {
    let p = Params { map: &req.params };
    let rows = match req.check.as_str() {
        "chi2" | "chi2-tail" | "chi2-norm" => {
            let norm = req.check == "chi2-norm" || (req.check == "chi2" && req.params.contains_key("eps"));
            if norm {
                let (up, lo) = chi2_norm_bounds(p.count("n")?, p.count_or("d", 0)?, p.real("eps")?)?;
                vec![BoundRow::from_comparison(&up, inputs), BoundRow::from_comparison(&lo, inputs)]
            } else {
                vec![BoundRow::from_comparison(&chi2_tail_bound(p.count("d")?, p.real("t")?)?, inputs)]
            }
        }
        "pelekis" => {
            vec![BoundRow::from_comparison(&pelekis_bound(p.count("p")?, p.real("mu")?, p.count("t")?)?, inputs)]
        }
        "ratio" => {
            let sup = p.real_or("sup_h1", prior.slab.sup_density());
            let v = posterior_ratio_bound(
                p.count("t_minus_s")? as u32,
                p.count("n")? as usize,
                p.count("p")? as usize,
                p.real("lambda")?,
                p.real_or("eta", consts.eta),
                sup,
            );
            vec![BoundRow::value("ratio", inputs, v)]
        }
        "rn" => {
            let reading =
                if p.real_or("per_model", 0.0) != 0.0 { SizeMassReading::PerModel } else { SizeMassReading::Total };
            let r = selection_rate(
                prior,
                p.count("n")? as usize,
                p.count("p")? as usize,
                p.count("s")? as usize,
                p.real("lambda")?,
                p.real_or("eta", consts.eta),
                p.real_or("k", consts.k),
                reading,
            )?;
            let c = BoundComparison { asserted: false, ..BoundComparison::upper("rn", 1.0, r.r_n, 0.0, vec![]) };
            let mut row = BoundRow::from_comparison(&c, inputs);
            row.holds = Some(r.below_one);
            row.verdict = if r.below_one { "holds" } else { "fails-unasserted" };
            vec![row]
        }
        "omega" => {
            let (n, pp, s) = (p.count("n")? as usize, p.count("p")? as usize, p.count("s")? as usize);
            let seed = p.count_or("seed", 0)?;
            let unit = CoefficientSpec::ConstantRandomSign { magnitude: 1.0 };
            let inst = generate_instance(n, pp, s, &unit, 1.0, DesignSpec::IidGaussian, seed)?;
            let xi = &inst.truth()?.xi_star;
            let r = omega_event_frequency(
                &inst.x,
                xi,
                p.real_or("k", consts.k),
                p.real_or("eta", consts.eta),
                p.count_or("draws", 10_000)? as usize,
                seed,
                p.count_or("cap", 1_000_000)? as u128,
                exec,
            )?;
            let c = BoundComparison::upper("omega", r.union_bound, r.frequency, 3.0 * r.std_error, vec![]);
            vec![BoundRow::from_comparison(&BoundComparison { asserted: false, ..c }, inputs)]
        }
        other => {
            return invalid(format!("unknown check '{other}' (chi2, chi2-tail, chi2-norm, pelekis, ratio, rn, omega)"))
        }
    };
    Ok(rows)
}

fn format_inputs(params: &BTreeMap<String, f64>) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Evaluate each request; a failing request becomes an error row.
pub fn run_bounds(
    requests: &[BoundRequest],
    prior: &PriorSpec,
    consts: &RegularityConstants,
    exec: Exec,
) -> Vec<BoundRow> {
    requests
        .iter()
        .flat_map(|req| {
            let inputs = format_inputs(&req.params);
            evaluate(req, prior, consts, exec, &inputs)
                .unwrap_or_else(|e| vec![BoundRow::failed(&req.check, &inputs, &e)])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(check: &str, params: &str) -> BoundRequest {
        BoundRequest { check: check.into(), params: parse_params(params).unwrap() }
    }

    #[test]
    fn parses_parameter_lists() {
        let m = parse_params("d=3, t = 5.5,").unwrap();
        assert_eq!(m["d"], 3.0);
        assert_eq!(m["t"], 5.5);
        assert!(parse_params("d3").is_err());
        assert!(parse_params("d=x").is_err());
    }

    #[test]
    fn rows_for_each_check() {
        let prior = PriorSpec::default();
        let c = RegularityConstants::default();
        let reqs = vec![
            req("chi2", "d=1,t=4"),
            req("chi2", "n=100,d=0,eps=0.5"),
            req("pelekis", "p=10,mu=0.1,t=2"),
            req("ratio", "t_minus_s=1,n=400,p=100,lambda=1,eta=0.1"),
            req("rn", "n=400,p=100,s=1,lambda=1"),
            req("omega", "n=40,p=6,s=1,k=1,eta=0.5,draws=200"),
            req("chi2", "d=4,t=1"),
            req("nope", ""),
        ];
        let rows = run_bounds(&reqs, &prior, &c, Exec::Sequential);
        let verdicts: Vec<&str> = rows.iter().map(|r| r.verdict).collect();
        assert_eq!(rows.len(), 9);
        assert_eq!(&verdicts[..4], &["holds", "holds", "holds", "fails-unasserted"]);
        assert_eq!(rows[4].verdict, "value");
        assert!((rows[4].bound.unwrap() - 15.8489).abs() < 1e-3);
        assert_eq!(rows[5].verdict, "fails-unasserted");
        assert_eq!(rows[6].check, "omega");
        assert_eq!(rows[7].status, "error");
        assert_eq!(rows[8].status, "error");
        assert_eq!(rows[0].inputs, "d=1;t=4");
    }
}

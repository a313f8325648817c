use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigen::{MrevMethod, DEFAULT_CAP};
use crate::error::{invalid, Error, Result};
use crate::inference::SamplerConfig;
use crate::model::{epsilon_n, DesignSpec, RegularityConstants};
use crate::priors::PriorSpec;

use crate::diagnostics::SizeMassReading;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Contract,
    Select,
    AuditPrior,
    AuditEigen,
    Bounds,
}

impl Study {
    pub fn tag(self) -> &'static str {
        match self {
            Study::Contract => "contract",
            Study::Select => "select",
            Study::AuditPrior => "audit-prior",
            Study::AuditEigen => "audit-eigen",
            Study::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub n: usize,
    pub p: usize,
    pub s: usize,
}

/// Magnitude of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    Absolute {
        magnitude: f64,
    },
    /// `multiple * sigma* sqrt(log p / n)`.
    Rate {
        multiple: f64,
    },
    /// `multiple * M3 sigma* eps_n / sqrt(lambda)`, the beta-min threshold.
    BetaMin {
        multiple: f64,
    },
}

impl SignalSpec {
    pub fn magnitude(&self, g: GridPoint, sigma_star: f64, m3: f64, lambda: f64) -> Result<f64> {
        let m = match *self {
            SignalSpec::Absolute { magnitude } => magnitude,
            SignalSpec::Rate { multiple } => multiple * sigma_star * ((g.p as f64).ln() / g.n as f64).sqrt(),
            SignalSpec::BetaMin { multiple } => {
                if !(lambda > 0.0) {
                    return invalid(format!("beta-min signal needs lambda > 0, got {lambda}"));
                }
                multiple * m3 * sigma_star * epsilon_n(g.n, g.p, g.s.max(1))? / lambda.sqrt()
            }
        };
        if !(m > 0.0 && m.is_finite()) {
            return invalid(format!("signal magnitude must be positive and finite, got {m}"));
        }
        Ok(m)
    }

    fn with_multiple(&self, multiple: f64) -> Self {
        match *self {
            SignalSpec::Absolute { magnitude } => SignalSpec::Absolute { magnitude: magnitude * multiple },
            SignalSpec::Rate { multiple: m } => SignalSpec::Rate { multiple: m * multiple },
            SignalSpec::BetaMin { multiple: m } => SignalSpec::BetaMin { multiple: m * multiple },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Exact enumeration when every model fits in the budget, MCMC otherwise.
    #[default]
    Auto,
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    /// Largest model size enumerated in exact mode; all sizes when absent.
    pub max_size: Option<usize>,
    /// Enumeration budget in models, shared by exact inference and the
    /// eigenvalue computations.
    pub cap: u64,
    /// Conditional draws per enumerated model in exact summaries.
    pub draws_per_model: usize,
    pub sampler: SamplerConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: InferenceMode::Auto,
            max_size: None,
            cap: 1 << 16,
            draws_per_model: 1000,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Signal multiple of the weak arm relative to the configured signal.
    pub below_fraction: f64,
    pub reading: SizeMassReading,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { below_fraction: 0.05, reading: SizeMassReading::Total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Orders `t` of the eigenvalue functionals; `(K + 1) s` when empty.
    pub orders: Vec<usize>,
    /// Largest size in the prior tail checks; `p` when absent.
    pub t_max: Option<usize>,
    pub alpha: f64,
    #[serde(with = "mrev_method")]
    pub mrev: MrevMethod,
    pub cap: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { orders: Vec::new(), t_max: None, alpha: 1.0, mrev: MrevMethod::DenseGrid, cap: DEFAULT_CAP as u64 }
    }
}

mod mrev_method {
    use super::MrevMethod;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
    enum Repr {
        DenseGrid,
        Randomized { restarts: usize, seed: u64 },
    }

    pub fn serialize<S: Serializer>(m: &MrevMethod, s: S) -> Result<S::Ok, S::Error> {
        match *m {
            MrevMethod::DenseGrid => Repr::DenseGrid,
            MrevMethod::Randomized { restarts, seed } => Repr::Randomized { restarts, seed },
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<MrevMethod, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::DenseGrid => MrevMethod::DenseGrid,
            Repr::Randomized { restarts, seed } => MrevMethod::Randomized { restarts, seed },
        })
    }
}

/// One bound comparison requested by name with numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRequest {
    pub check: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// A complete study description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "unit")]
    pub sigma_star: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_design")]
    pub design: DesignSpec,
    #[serde(default = "default_signal")]
    pub signal: SignalSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub constants: RegularityConstants,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub bounds: Vec<BoundRequest>,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_design() -> DesignSpec {
    DesignSpec::IidGaussian
}

fn default_signal() -> SignalSpec {
    SignalSpec::BetaMin { multiple: 2.0 }
}

impl ExperimentConfig {
    /// A config with every optional section at its default.
    pub fn new(study: Study) -> Self {
        toml::from_str(&format!("study = \"{}\"", study.tag())).expect("defaults deserialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.constants.validate()?;
        self.inference.sampler.validate()?;
        if self.study == Study::Bounds {
            if self.bounds.is_empty() {
                return invalid("a bounds study needs at least one [[bounds]] entry");
            }
            return Ok(());
        }
        if self.grid.is_empty() {
            return invalid("grid must be nonempty");
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if !(self.sigma_star > 0.0 && self.sigma_star.is_finite()) {
            return invalid(format!("sigma_star must be positive, got {}", self.sigma_star));
        }
        for g in &self.grid {
            if g.s > g.p || g.n < 2 || g.p == 0 {
                return invalid(format!("grid point needs n >= 2, p >= 1, s <= p (got {g:?})"));
            }
        }
        if !(self.select.below_fraction > 0.0) {
            return invalid("select.below_fraction must be positive");
        }
        if self.inference.draws_per_model == 0 {
            return invalid("inference.draws_per_model must be positive");
        }
        Ok(())
    }

    /// Signal of the weak selection arm.
    pub fn below_signal(&self) -> SignalSpec {
        self.signal.with_multiple(self.select.below_fraction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = r#"
            study = "contract"
            seed = 7
            replications = 3
            grid = [{ n = 100, p = 100, s = 3 }, { n = 200, p = 200, s = 3 }]
            design = { kind = "equicorrelated", rho = 0.2 }
            signal = { kind = "rate", multiple = 10.0 }

            [prior]
            selection = { kind = "csv", csv_base = "p^4" }
            spike = { kind = "dirac" }
            slab = { kind = "gaussian", scale = 1.0 }

            [constants]
            k = 2.0

            [inference]
            mode = "mcmc"
            [inference.sampler]
            sweeps = 300
            burn_in = 100
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.grid.len(), 2);
        assert_eq!(cfg.inference.sampler.sweeps, 300);
        assert_eq!(cfg.signal, SignalSpec::Rate { multiple: 10.0 });
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("study = \"contract\"").is_err());
        assert!(ExperimentConfig::from_toml_str(
            "study = \"contract\"\nreplications = 0\ngrid = [{ n = 10, p = 5, s = 1 }]"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml_str("study = \"contract\"\ngrid = [{ n = 10, p = 5, s = 6 }]").is_err());
        assert!(ExperimentConfig::from_toml_str("study = \"contract\"\ngrid = [{ n = 10, p = 5, s = 1 }]\nbogus = 1")
            .is_err());
        assert!(ExperimentConfig::from_toml_str("study = \"bounds\"").is_err());
    }

    #[test]
    fn signal_units() {
        let g = GridPoint { n: 400, p: 100, s: 4 };
        let beta_min = SignalSpec::BetaMin { multiple: 2.0 }.magnitude(g, 1.0, 4.5, 0.25).unwrap();
        let eps = epsilon_n(400, 100, 4).unwrap();
        assert!((beta_min - 2.0 * 4.5 * eps / 0.5).abs() < 1e-12);
        let rate = SignalSpec::Rate { multiple: 10.0 }.magnitude(g, 2.0, 4.5, 0.25).unwrap();
        assert!((rate - 20.0 * (100f64.ln() / 400.0).sqrt()).abs() < 1e-12);
        assert!(SignalSpec::BetaMin { multiple: 1.0 }.magnitude(g, 1.0, 4.5, 0.0).is_err());
        let weak = SignalSpec::BetaMin { multiple: 2.0 }.with_multiple(0.05);
        assert_eq!(weak, SignalSpec::BetaMin { multiple: 0.1 });
    }
}

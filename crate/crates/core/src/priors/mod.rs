//! The four prior components (variance, model selection, spike, slab) and an
//! auditor that evaluates each prior assumption at a concrete `(n, p, s)`.

mod audit;
mod components;
mod selection;
mod variance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use audit::{audit_assumption1, ClauseCheck, PriorDiagnostics, TailCheck};
pub use components::{compute_z0n, slab_floor, SlabDist, SpikeDist};
pub use selection::{selection_mass, CsvBase, ModelSelectionPrior};
pub use variance::VariancePrior;

/// Joint prior: `sigma^2 ~ g`, `xi ~ pi`, and given both, independent
/// coefficients `beta_j | sigma ~ h(beta_j/sigma)/sigma` with `h = h1` on
/// `xi` and `h = h0` off it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub variance: VariancePrior,
    pub selection: ModelSelectionPrior,
    pub spike: SpikeDist,
    pub slab: SlabDist,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            variance: VariancePrior::default(),
            selection: ModelSelectionPrior::Bernoulli,
            spike: SpikeDist::Dirac,
            slab: SlabDist::Gaussian { scale: 1.0 },
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.variance.validate()?;
        self.selection.validate()?;
        self.spike.validate()?;
        self.slab.validate()
    }

    /// Gaussian slab with a point-mass or Gaussian spike: both `beta` and
    /// `sigma^2` integrate out in closed form.
    pub fn is_conjugate(&self) -> bool {
        matches!(self.slab, SlabDist::Gaussian { .. }) && !matches!(self.spike, SpikeDist::Laplace { .. })
    }

    /// Parse a prior from TOML, either at top level or under `[prior]`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let body = match table.get("prior") {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => table,
        };
        let spec: PriorSpec = body.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

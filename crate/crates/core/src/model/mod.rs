//! Linear-model data structures, synthetic instances and projection/rank
//! primitives.

mod consts;
mod index;
mod instance;
pub mod io;
pub mod linalg;

pub use consts::{epsilon_n, PremiseReport, RegularityConstants};
pub use index::ModelIndex;
pub use instance::{generate_instance, standardize_columns, CoefficientSpec, DesignSpec, GroundTruth, ProblemInstance};
pub use linalg::{is_full_rank, project_onto_model, RankInfo};

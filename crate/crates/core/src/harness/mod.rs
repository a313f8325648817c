//! Reproducible studies: a TOML [`ExperimentConfig`] drives a grid of
//! designs and replications through inference and diagnostics, and the
//! results land in headered CSV files next to a run manifest.
//!
//! Every random stream is derived from the master seed and the row
//! coordinates, and rows are merged in `(grid, arm, replication)` order, so
//! output files do not depend on the worker count.

mod audit;
mod bounds;
mod config;
mod posterior;
mod row;
mod study;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use audit::{run_eigen_audit, run_prior_audit, EigenAuditRow, PriorAuditRow, LAMBDA_FLOOR};
pub use bounds::{parse_params, run_bounds, BoundRow};
pub use config::{
    AuditConfig, BoundRequest, ExperimentConfig, GridPoint, InferenceConfig, InferenceMode, SelectConfig, SignalSpec,
    Study,
};
pub use posterior::{run_posterior, ModelRow, PosteriorRun};
pub use row::{study_row_header, write_csv, RowKey, StudyRow, STUDY_ROW_VERSION};
pub use study::{
    aggregate, design_seed, fit, instance_for, median, prepare_design, replication_seed, run_contraction_study,
    run_selection_study, Fitted, GridAggregate, PreparedDesign,
};

use crate::error::Result;
use crate::exec::Exec;

/// Run `f` on a pool of `workers` threads (all cores when `None`), or
/// sequentially for one worker or without the `parallel` feature.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce(Exec) -> R + Send) -> Result<R> {
    if workers == Some(1) {
        return Ok(f(Exec::Sequential));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| crate::error::Error::InvalidArgument(format!("worker pool: {e}")))?;
        Ok(pool.install(|| f(Exec::Parallel)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f(Exec::Sequential))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub study: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub study_row_version: u32,
    pub files: Vec<String>,
    pub rows: usize,
    pub errors: usize,
    pub wall_time_secs: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T], files: &mut Vec<String>) -> Result<()> {
    write_csv(rows, fs::File::create(dir.join(name))?)?;
    files.push(name.to_string());
    Ok(())
}

/// Run the study described by `cfg` and write its CSV files and manifest
/// into `out` (the config's `output_dir` when `None`, else `results`).
pub fn run_study(cfg: &ExperimentConfig, out: Option<&Path>, workers: Option<usize>) -> Result<(PathBuf, Manifest)> {
    cfg.validate()?;
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let mut files = Vec::new();
    let (rows, errors) = match cfg.study {
        Study::Contract | Study::Select => {
            let rows = with_workers(workers, |exec| {
                if cfg.study == Study::Contract {
                    run_contraction_study(cfg, exec)
                } else {
                    run_selection_study(cfg, exec)
                }
            })??;
            write_rows(&dir, "rows.csv", &rows, &mut files)?;
            write_rows(&dir, "aggregate.csv", &aggregate(&rows), &mut files)?;
            (rows.len(), rows.iter().filter(|r| !r.is_ok()).count())
        }
        Study::AuditPrior => {
            let rows = with_workers(workers, |exec| run_prior_audit(cfg, exec))??;
            write_rows(&dir, "audit_prior.csv", &rows, &mut files)?;
            (rows.len(), rows.iter().filter(|r| r.status != "ok").count())
        }
        Study::AuditEigen => {
            let rows = with_workers(workers, |exec| run_eigen_audit(cfg, exec))??;
            write_rows(&dir, "audit_eigen.csv", &rows, &mut files)?;
            (rows.len(), rows.iter().filter(|r| r.status != "ok").count())
        }
        Study::Bounds => {
            let rows = with_workers(workers, |exec| run_bounds(&cfg.bounds, &cfg.prior, &cfg.constants, exec))?;
            write_rows(&dir, "bounds.csv", &rows, &mut files)?;
            (rows.len(), rows.iter().filter(|r| r.status != "ok").count())
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        study: cfg.study.tag(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        workers,
        study_row_version: STUDY_ROW_VERSION,
        files,
        rows,
        errors,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok((dir, manifest))
}

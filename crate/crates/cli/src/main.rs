use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use spikeslab::harness::{
    parse_params, run_bounds, run_posterior, run_study, with_workers, write_csv, BoundRequest, ExperimentConfig, Study,
};
use spikeslab::model::io::load_bundle;

/// Spike-and-slab regression studies, audits and bound checks.
///
/// Every command writes headered CSV files and a manifest.json recording the
/// config hash, tool version and wall time.
#[derive(Debug, Parser)]
#[command(name = "spikeslab", version)]
struct Cli {
    /// Study config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior contraction study over the config grid.
    ContractStudy,
    /// Paired above/below beta-min model selection study.
    SelectStudy,
    /// Prior assumption audit at every grid point.
    AuditPrior,
    /// Eigenvalue functionals and the united-eigenvalue condition.
    AuditEigen,
    /// Bound calculators against exact oracles.
    Bounds {
        /// chi2, chi2-tail, chi2-norm, pelekis, ratio, rn or omega.
        #[arg(long)]
        check: Option<String>,
        /// Comma-separated key=value parameters.
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Posterior model probabilities of one instance.
    Posterior {
        /// Instance bundle (JSON); replication 0 of the first grid point
        /// when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of models listed.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

/// The config file with `study` forced, unvalidated, and the seed override
/// applied.
fn read_config(cli: &Cli, study: Study) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut raw: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
            raw.insert("study".into(), toml::Value::String(study.tag().into()));
            raw.try_into().with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ExperimentConfig::new(study),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_configured(cli: &Cli, study: Study) -> Result<()> {
    if cli.config.is_none() {
        bail!("{} needs --config FILE", study.tag());
    }
    let cfg = read_config(cli, study)?;
    cfg.validate()?;
    let (dir, m) = run_study(&cfg, cli.out.as_deref(), cli.workers)?;
    eprintln!("{}: {} rows ({} errors) in {:.1}s -> {}", m.study, m.rows, m.errors, m.wall_time_secs, dir.display());
    Ok(())
}

fn bounds(cli: &Cli, check: &Option<String>, params: &str) -> Result<()> {
    let Some(check) = check else {
        return run_configured(cli, Study::Bounds);
    };
    let mut cfg = read_config(cli, Study::Bounds)?;
    cfg.bounds = vec![BoundRequest { check: check.clone(), params: parse_params(params)? }];
    match &cli.out {
        Some(dir) => {
            let (dir, m) = run_study(&cfg, Some(dir), cli.workers)?;
            eprintln!("bounds: {} rows -> {}", m.rows, dir.display());
        }
        None => {
            let rows = with_workers(cli.workers, |exec| run_bounds(&cfg.bounds, &cfg.prior, &cfg.constants, exec))?;
            write_csv(&rows, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn posterior(cli: &Cli, data: Option<&Path>, top: usize) -> Result<()> {
    let cfg = read_config(cli, Study::Contract)?;
    let inst = data.map(|p| load_bundle(p).with_context(|| format!("reading {}", p.display()))).transpose()?;
    if inst.is_none() && cfg.grid.is_empty() {
        bail!("posterior needs --data BUNDLE or a config with a grid");
    }
    let run = run_posterior(&cfg, inst, top)?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_csv(&run.models, fs::File::create(dir.join("models.csv"))?)?;
            if let Some(row) = &run.summary {
                write_csv(std::slice::from_ref(row), fs::File::create(dir.join("summary.csv"))?)?;
            }
            eprintln!("posterior: {} models -> {}", run.models.len(), dir.display());
        }
        None => write_csv(&run.models, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::ContractStudy => run_configured(&cli, Study::Contract),
        Command::SelectStudy => run_configured(&cli, Study::Select),
        Command::AuditPrior => run_configured(&cli, Study::AuditPrior),
        Command::AuditEigen => run_configured(&cli, Study::AuditEigen),
        Command::Bounds { check, params } => bounds(&cli, check, params),
        Command::Posterior { data, top } => posterior(&cli, data.as_deref(), *top),
    }
}

//! `picar`: simulate spatial datasets, fit projection-based ICAR models and
//! run replication studies from JSON configurations.

mod commands;
mod files;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use picar::basis::PrecisionKind;
use picar::study::{Preset, StudyConfig};

#[derive(Parser, Debug)]
#[command(name = "picar", version, about = "Projection-based ICAR spatial models")]
struct Cli {
    /// Worker threads for replicates, study cells and linear algebra.
    #[arg(long, global = true, env = "PICAR_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Where the study configuration comes from.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Built-in configuration to start from.
    #[arg(long, default_value = "binary", value_parser = parse_preset)]
    pub preset: Preset,

    /// JSON configuration file; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Base seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Overrides of the fit settings.
#[derive(Args, Debug, Clone, Default)]
pub struct FitArgs {
    /// Fixed rank; skips the rank screen.
    #[arg(long)]
    pub rank: Option<usize>,

    /// Largest candidate rank.
    #[arg(long)]
    pub max_rank: Option<usize>,

    /// Mesh vertex count.
    #[arg(long)]
    pub nodes: Option<usize>,

    /// Prior precision: `ind`, `icar` or `car:RHO`.
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<PrecisionKind>,

    #[arg(long)]
    pub iterations: Option<usize>,

    #[arg(long)]
    pub burn_in: Option<usize>,

    #[arg(long)]
    pub thin: Option<usize>,

    /// Drops the constant covariate column.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate replicate datasets with a SHA-256 manifest.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Replicate count; defaults to the configuration's.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Triangulate the sites of a dataset.
    Mesh {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Leading Moran's eigenvectors of a mesh.
    Basis {
        #[arg(long)]
        mesh: PathBuf,
        /// Number of eigenvectors.
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Held-out GLM screen over candidate ranks.
    SelectRank {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Mesh, basis, rank screen, MCMC and held-out prediction.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// Replicate index selecting the chain's seed stream.
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Recompute held-out predictions from a fit directory's chain files.
    Predict {
        /// Output directory of `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a replication study and write its tables and plots.
    Study {
        #[arg(value_parser = parse_preset)]
        preset: Preset,
        /// JSON configuration file; replaces the preset's.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Defaults to the configuration's output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print a preset's configuration as JSON.
    Config {
        #[arg(value_parser = parse_preset)]
        preset: Preset,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: picar::PicarError| e.to_string())
}

pub fn parse_precision(s: &str) -> Result<PrecisionKind, String> {
    let lower = s.trim().to_ascii_lowercase();
    let kind = match lower.as_str() {
        "ind" | "identity" => PrecisionKind::Identity,
        "icar" => PrecisionKind::Icar,
        other => {
            let rho = other
                .strip_prefix("car:")
                .and_then(|r| r.parse::<f64>().ok())
                .ok_or_else(|| format!("expected ind, icar or car:RHO, got {s:?}"))?;
            PrecisionKind::Car(rho)
        }
    };
    kind.validate().map_err(|e| e.to_string())?;
    Ok(kind)
}

impl ConfigArgs {
    pub fn load(&self) -> anyhow::Result<StudyConfig> {
        commands::load_config(self.preset, self.config.as_deref(), self.seed)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, replicates, out } => commands::simulate(&config.load()?, replicates, &out),
        Command::Mesh { config, data, fit, out } => commands::mesh(&config.load()?, &data, &fit, &out),
        Command::Basis { mesh, rank, seed, out } => commands::basis(&mesh, rank, seed, &out),
        Command::SelectRank { config, data, fit, out } => commands::select_rank(&config.load()?, &data, &fit, &out),
        Command::Fit { config, data, fit, replicate, out } => {
            commands::fit(&config.load()?, &data, &fit, replicate, &out)
        }
        Command::Predict { fit, data, out } => commands::predict(&fit, &data, &out),
        Command::Study { preset, config, seed, replicates, out } => {
            let cfg = commands::load_config(preset, config.as_deref(), seed)?;
            commands::study(preset, cfg, replicates, out.as_deref())
        }
        Command::Config { preset } => {
            println!("{}", serde_json::to_string_pretty(&StudyConfig::preset(preset))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "esg", version, about = "Entropic semi-geostrophic particle solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Simulation config (.cfg).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides ball-sampling seeds: alpha0 uses SEED, mu0 uses SEED + 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Log progress to stderr.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and write a trajectory plus `<out>.manifest.json`.
    Run(Common),
    /// Self-convergence rate in tau; the last grid entry is the reference.
    StudyTau {
        #[command(flatten)]
        common: Common,
        /// Strictly decreasing comma-separated list.
        #[arg(long, value_delimiter = ',', required = true)]
        tau_grid: Vec<f64>,
    },
    /// Entropic gap against exact W2 between alpha0 and mu0.
    StudyEps {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of positive epsilons
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
    },
    /// Distances between successive runs of a refinement schedule.
    StudyJoint {
        #[command(flatten)]
        common: Common,
        /// One row per line: `epsilon tau count seed`.
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Total entropic energy along a trajectory.
    ReportEnergy {
        #[command(flatten)]
        common: Common,
        /// Existing trajectory; simulated from the config when omitted.
        #[arg(long)]
        traj: Option<PathBuf>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Run(c) => c,
            Command::StudyTau { common, .. }
            | Command::StudyEps { common, .. }
            | Command::StudyJoint { common, .. }
            | Command::ReportEnergy { common, .. } => common,
        }
    }
}

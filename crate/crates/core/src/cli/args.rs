//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::estimator::Variant;
use crate::gradcheck::GRAD_TOLERANCE;

use super::commands::{cmd_grad_check, cmd_run, cmd_simulate, cmd_sweep};
use super::config::ExperimentConfig;
use super::plotdata::cmd_plotdata;

/// Log filter variable: `error`, `info` or `debug`.
pub const LOG_ENV: &str = "TON_CALIB_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "ton-calib",
    version,
    about = "Online camera-IMU time offset calibration experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated dataset directory.
    Simulate(Common),
    /// Run one pipeline variant and write its diagnostics and metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the config variant.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Run offsets x drifts x seeds x variants and write summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Initial offsets in seconds, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        offsets: Option<Vec<f64>>,
        /// Seeds, comma separated; replaces the sweep seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Variants, comma separated.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        /// Parallel cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Turn a run directory into plot-ready CSVs.
    Plotdata {
        /// Directory written by `run`.
        run: PathBuf,
        /// Destination; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients and Jacobians against finite differences.
    GradCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Runs a parsed command. Returns `Ok(false)` when the gradient suite
/// fails, so the caller can exit nonzero without an error message.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(common) => {
            let dir = cmd_simulate(&common.load()?, common.out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Run { common, variant } => {
            let mut config = common.load()?;
            if let Some(v) = variant {
                config.variant = v;
            }
            let report = cmd_run(&config, common.out.as_deref())?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Sweep {
            common,
            offsets,
            seeds,
            variants,
            jobs,
        } => {
            let mut config = common.load()?;
            let sweep = &mut config.sweep;
            if let Some(o) = offsets {
                sweep.offsets = o;
            }
            if let Some(s) = seeds {
                sweep.seeds = s;
            } else if let Some(s) = common.seed {
                sweep.seeds = vec![s];
            }
            if let Some(v) = variants {
                sweep.variants = v;
            }
            let rows = cmd_sweep(&config, common.out.as_deref(), jobs)?;
            let failed = rows.iter().filter(|r| r.report.is_none()).count();
            println!("{} cells, {failed} failed", rows.len());
        }
        Command::Plotdata { run, out } => {
            for path in cmd_plotdata(&run, out.as_deref())? {
                println!("{}", path.display());
            }
        }
        Command::GradCheck { seed } => {
            let start = std::time::Instant::now();
            let results = cmd_grad_check(seed);
            let mut ok = true;
            for r in &results {
                ok &= r.passed();
                let verdict = if r.passed() { "ok" } else { "FAIL" };
                println!("{:<20} max error {:.3e}  {verdict}", r.name, r.max_error);
            }
            println!(
                "tolerance {GRAD_TOLERANCE:e}, {:.2} s",
                start.elapsed().as_secs_f64()
            );
            return Ok(ok);
        }
    }
    Ok(true)
}

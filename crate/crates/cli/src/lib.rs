//! Command-line front end: `simulate`, `sweep`, `pes` and `fit-dcs`.

pub mod commands;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Clock, RunOptions};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "bellbeam", version, about = "Entangled-pair crossed-beam CHSH simulator")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration (or a previous run's manifest.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config and BELLBEAM_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of atom pairs per run.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write the per-pair trial log.
    #[arg(long)]
    pub trial_log: bool,
}

impl From<&RunArgs> for RunOptions {
    fn from(a: &RunArgs) -> Self {
        RunOptions {
            config: a.config.clone(),
            seed: a.seed,
            trials: a.trials,
            out: a.out.clone(),
            trial_log: a.trial_log,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one experiment and export histograms and the CHSH estimate.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Use a bootstrap with this many resamples for the standard error.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Estimate the test statistic over a list of Werner parameters.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated Werner parameters, e.g. 0,0.5,1. Defaults to the
        /// list recorded in a manifest passed as --config.
        #[arg(long = "p-list")]
        p_list: Option<String>,
    },
    /// Coupled-model adiabats from Cartesian potentials (CSV rows or one JSON point).
    Pes { input: PathBuf, output: PathBuf },
    /// Fit Gaussian peaks to a digitised theta_rad,intensity curve.
    FitDcs {
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        peaks: usize,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn execute(cli: &Cli, clock: &Clock) -> CliResult<()> {
    let body = || -> CliResult<()> {
        match &cli.command {
            Command::Simulate { run, bootstrap } => {
                let est = commands::simulate(&run.into(), *bootstrap, clock)?;
                println!(
                    "S = {:.4} ± {:.4} ({})",
                    est.s,
                    est.std_error,
                    if est.violated { "violation" } else { "no violation" }
                );
            }
            Command::Sweep { run, p_list } => {
                let ps = match p_list {
                    Some(text) => commands::parse_p_list(text)?,
                    None => commands::manifest_p_list(run.config.as_deref())?,
                };
                for row in commands::sweep(&run.into(), &ps, clock)? {
                    println!(
                        "p = {:.4}  S = {:.4} ± {:.4}  theory {:.4}  violated {}",
                        row.p, row.s_hat, row.std_error, row.s_theory, row.violated
                    );
                }
            }
            Command::Pes { input, output } => commands::pes(input, output, clock)?,
            Command::FitDcs { input, peaks, out } => {
                let fit = commands::fit_dcs(input, *peaks, out, clock)?;
                println!(
                    "fitted {} peaks, rms residual {:.3e}",
                    fit.peaks.len(),
                    fit.rms_residual
                );
            }
        }
        Ok(())
    };
    match cli.threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot build thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, &Clock::from_env()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("bellbeam: {e}");
            e.code
        }
    }
}

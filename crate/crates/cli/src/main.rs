use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wigbell::config::ExperimentConfig;
use wigbell::runner::{self, CliError, CriticalMuArgs, GlobalOpts};

/// Simulates intensity-threshold Bell-CHSH experiments driven by Gaussian
/// hidden variables, and checks them against deterministic oracles.
#[derive(Parser)]
#[command(name = "wigbell", version, max_term_width = 100)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalFlags {
    /// Experiment description (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; defaults to $WIGBELL_OUT_DIR, then the working
    /// directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the seed recorded in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides n_trials from the config.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<u64>,
    /// Worker threads; 0 picks a default. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    workers: usize,
    /// Suppress the summary lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: detection statistics, thinned count table,
    /// quadrature predictions, and CHSH under both null-outcome policies.
    Simulate {
        /// Also write the per-trial counting log (9 bytes per trial).
        #[arg(long, value_name = "PATH")]
        trial_log: Option<PathBuf>,
    },
    /// CHSH estimates across the config's mu_grid, written as CSV.
    Sweep,
    /// Bisect for the efficiency at which post-selected |S| crosses a
    /// threshold.
    CriticalMu {
        /// |S| level to bracket.
        #[arg(long, default_value_t = 2.0, value_name = "S")]
        threshold: f64,
        #[arg(long, default_value_t = 0.05, value_name = "MU")]
        mu_lo: f64,
        #[arg(long, default_value_t = 1.0, value_name = "MU")]
        mu_hi: f64,
        /// Stop once |S| at the midpoint sits within this of the threshold.
        #[arg(long, default_value_t = wigbell_core::bell::DEFAULT_S_TOL, value_name = "TOL")]
        s_tol: f64,
        /// Stop once the bracket is narrower than this.
        #[arg(long, default_value_t = 5e-3, value_name = "TOL")]
        mu_tol: f64,
    },
    /// Exact ceiling on post-selected S over local models at a given
    /// detection efficiency.
    LhvBound {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Also report the efficiency below which this |S| becomes
        /// reachable by a local model.
        #[arg(long, value_name = "S")]
        target_s: Option<f64>,
    },
    /// Compare Monte Carlo moments against deterministic quadrature on the
    /// base spec plus randomized ones.
    OracleCheck {
        /// Number of randomized experiment specs beyond the base one.
        #[arg(long, default_value_t = 5, value_name = "N")]
        random_specs: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let opts = GlobalOpts {
        out_dir: cli
            .global
            .out
            .or_else(|| std::env::var_os("WIGBELL_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".")),
        seed: cli.global.seed,
        trials: cli.global.trials,
        workers: cli.global.workers,
        quiet: cli.global.quiet,
    };
    let config: Option<ExperimentConfig> = match &cli.global.config {
        Some(path) => Some(runner::load_config(path)?),
        None => None,
    };
    let require_config = |name: &str| -> Result<&ExperimentConfig, CliError> {
        config
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("config error: {name} needs --config PATH")))
    };

    let output = match cli.command {
        Command::Simulate { trial_log } => {
            runner::cmd_simulate(require_config("simulate")?, &opts, trial_log.as_deref())?
        }
        Command::Sweep => runner::cmd_sweep(require_config("sweep")?, &opts)?,
        Command::CriticalMu { threshold, mu_lo, mu_hi, s_tol, mu_tol } => runner::cmd_critical_mu(
            require_config("critical-mu")?,
            &opts,
            &CriticalMuArgs { threshold, mu_lo, mu_hi, s_tol, mu_tol },
        )?,
        Command::LhvBound { eta, target_s } => {
            runner::cmd_lhv_bound(config.as_ref(), &opts, eta, target_s)?
        }
        Command::OracleCheck { random_specs } => {
            runner::cmd_oracle_check(config.as_ref(), &opts, random_specs)?
        }
    };

    if !opts.quiet {
        for line in &output.summary {
            println!("{line}");
        }
        for file in &output.files {
            println!("wrote {}", file.display());
        }
    }
    if output.check_failed {
        return Err(CliError::Runtime(
            "oracle check failed; see the report for the offending rows".into(),
        ));
    }
    Ok(())
}

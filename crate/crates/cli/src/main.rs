//! Command-line front end: single analyses, single simulations, and
//! parameter sweeps, all emitted as CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;
mod settings;

#[derive(Parser)]
#[command(
    name = "aoisim",
    version,
    about = "Age-of-Information simulator and analysis toolkit for grant-based \
             and grant-free random access"
)]
pub struct Cli {
    /// Flat `key = value` config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write CSV to this path instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Emit per-slot traces (and grant-free per-iteration diagnostics) on
    /// stderr.
    #[arg(long, global = true)]
    pub verbose: bool,

    /// Write the per-slot trace of `simulate` to this CSV file instead of
    /// stderr.
    #[arg(long, global = true, value_name = "PATH")]
    pub trace: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Closed-form and Markov-chain analysis.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Monte Carlo simulation of one configuration.
    Simulate(SimulateArgs),
    /// Parameter sweep with optional analytic overlay.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Baseline AAoI 1 / (eps * rho) of memoryless activation.
    Baseline {
        /// Activation probability (defaults to the configured activity_prob).
        #[arg(long)]
        eps: Option<f64>,
        /// Per-attempt success probability.
        #[arg(long)]
        rho: f64,
    },
    /// Threshold pairs holding the activation probability at a target.
    Thresholds {
        #[arg(long = "target-eps")]
        target_eps: f64,
        /// Largest forced-active threshold to consider.
        #[arg(long = "theta-max")]
        theta_max: u32,
        /// Activation-probability matching tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Also evaluate each pair's AAoI at this success rate.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long = "tail-tol", default_value_t = 1e-10)]
        tail_tol: f64,
    },
    /// Joint-chain AAoI of one threshold policy.
    Alg1 {
        /// Sleep threshold.
        #[arg(long)]
        sleep: u32,
        /// Forced-active threshold.
        #[arg(long)]
        force: u32,
        /// Base activation probability between the thresholds (defaults to
        /// the configured activity_prob).
        #[arg(long)]
        eps: Option<f64>,
        /// Per-attempt success probability.
        #[arg(long)]
        rho: f64,
        #[arg(long = "tail-tol", default_value_t = 1e-10)]
        tail_tol: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    GrantBased,
    GrantFree,
    FixedRho,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Bernoulli,
    Threshold,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariableArg {
    PilotLen,
    ActivityProb,
    NUsers,
    ThresholdPair,
}

/// Flags shared by `simulate` and `sweep`: simulation horizon, activation
/// policy, and overrides of the configured system parameters.
#[derive(Args, Clone)]
pub struct BaseArgs {
    /// Success probability of the fixed-rho protocol.
    #[arg(long)]
    pub rho: Option<f64>,

    /// Slots to simulate, burn-in included.
    #[arg(long)]
    pub slots: Option<u64>,

    /// Slots discarded before recording (default: ten times the expected
    /// AAoI, capped at half the slots).
    #[arg(long = "burn-in")]
    pub burn_in: Option<u64>,

    /// Activation policy (default bernoulli).
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,

    /// Sleep threshold of the threshold policy.
    #[arg(long)]
    pub sleep: Option<u32>,

    /// Forced-active threshold of the threshold policy.
    #[arg(long)]
    pub force: Option<u32>,

    /// Base probability of the threshold policy; when omitted it is solved
    /// so the long-run activation matches the configured activity_prob.
    #[arg(long = "base-prob")]
    pub base_prob: Option<f64>,

    /// Start threshold-policy users at interval 1 instead of the stationary
    /// interval distribution.
    #[arg(long = "cold-start")]
    pub cold_start: bool,

    /// Number of users (config key n_users).
    #[arg(long = "n")]
    pub n_users: Option<usize>,

    /// Activation probability (config key activity_prob).
    #[arg(long = "eps")]
    pub activity_prob: Option<f64>,

    /// Pilot length (config key pilot_len).
    #[arg(long = "l")]
    pub pilot_len: Option<usize>,

    /// Per-user pilot SNR in dB (config key per_user_snr_db).
    #[arg(long = "snr-db")]
    pub per_user_snr_db: Option<f64>,

    /// AMP iteration cap (config key amp_iters).
    #[arg(long = "amp-iters")]
    pub amp_iters: Option<usize>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Access protocol.
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,

    #[command(flatten)]
    pub base: BaseArgs,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Swept variable.
    #[arg(long, value_enum)]
    pub variable: VariableArg,

    /// Values: `start:end:step`, a comma list, `sleep/force` pairs, or
    /// `auto` (threshold pairs enumerated up to --theta-max).
    #[arg(long)]
    pub values: String,

    /// Comma list of protocols from {grant-based, grant-free, fixed-rho}.
    #[arg(long)]
    pub protocols: String,

    /// Also emit closed-form / joint-chain prediction rows.
    #[arg(long = "analysis-overlay")]
    pub analysis_overlay: bool,

    /// Largest forced-active threshold for `--values auto`.
    #[arg(long = "theta-max", default_value_t = 40)]
    pub theta_max: u32,

    /// Activation matching tolerance for threshold pairs.
    #[arg(long = "pair-tol", default_value_t = 1e-6)]
    pub pair_tol: f64,

    #[command(flatten)]
    pub base: BaseArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

//! `spde`: convergence experiments, OU checks and lemma sweeps.
//!
//! Exit status is 0 on success, 2 for invalid arguments or configuration and
//! 1 for numerical failures.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use settings::List;

#[derive(Debug, Parser)]
#[command(name = "spde", version, about = "Strong convergence experiments for linear implicit Euler on parabolic SPDEs")]
struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Flat key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Temporal strong error of the additive-noise reaction-diffusion problem against its exact OU solution.
    AdditiveConvergence(AdditiveArgs),
    /// Temporal strong error of the multiplicative-noise advection-diffusion problem against a fine-step reference.
    MultiplicativeConvergence(MultiplicativeArgs),
    /// Sweeps of the discrete smoothing and discrepancy estimates on dense operator families.
    LemmaLab(LemmaArgs),
    /// Exact OU recurrence of one mode: chained vs direct variance and a Monte Carlo check.
    OuCheck(OuArgs),
}

#[derive(Debug, Args)]
struct CommonConvergence {
    /// Noise regularity beta in q_ij = (i^2 + j^2)^-(beta + delta).
    #[arg(long)]
    beta: Option<f64>,
    /// Regularity offset delta [default: 0.001].
    #[arg(long)]
    delta: Option<f64>,
    /// Monte Carlo samples [default: 100].
    #[arg(long)]
    samples: Option<usize>,
    /// Master seed (falls back to SPDE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Final time [default: 1].
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Step-count exponents: ladder level e uses 2^e steps. Comma list or range, e.g. 4..9.
    #[arg(long)]
    ladder: Option<List<u32>>,
    /// The reference uses 2^fine-exponent steps.
    #[arg(long = "fine-exponent")]
    fine_exponent: Option<u32>,
    /// Output directory for {problem}_{beta}_{samples}.csv and .json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdditiveArgs {
    #[command(flatten)]
    common: CommonConvergence,
    /// Noise modes per axis.
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Debug, Args)]
struct MultiplicativeArgs {
    #[command(flatten)]
    common: CommonConvergence,
    /// Finite element cells per axis (also the noise modes per axis).
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Debug, Args)]
struct LemmaArgs {
    /// Lemma number 6 to 10, or `all`.
    #[arg(long)]
    lemma: Option<String>,
    /// Family dimensions, comma list.
    #[arg(long)]
    dim: Option<List<usize>>,
    /// Advection strengths, comma list.
    #[arg(long)]
    advection: Option<List<f64>>,
    /// Time-step exponents (dt = 2^-e), comma list or range.
    #[arg(long = "dt-exponents")]
    dt_exponents: Option<List<u32>>,
    /// CSV file for the sweep rows.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OuArgs {
    /// First mode index (>= 1).
    #[arg(long = "mode-i")]
    mode_i: Option<usize>,
    /// Second mode index (>= 1).
    #[arg(long = "mode-j")]
    mode_j: Option<usize>,
    /// Monte Carlo samples [default: 10000].
    #[arg(long)]
    samples: Option<usize>,
    /// Seed (falls back to SPDE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Noise regularity [default: 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Regularity offset [default: 0.001].
    #[arg(long)]
    delta: Option<f64>,
    /// Final time [default: 1].
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Exact steps on [0, t-final].
    #[arg(long)]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let (name, result) = match &cli.command {
        Command::AdditiveConvergence(a) => ("additive-convergence", commands::additive(a, cli.config.as_deref())),
        Command::MultiplicativeConvergence(a) => {
            ("multiplicative-convergence", commands::multiplicative(a, cli.config.as_deref()))
        }
        Command::LemmaLab(a) => ("lemma-lab", commands::lemma_lab(a, cli.config.as_deref())),
        Command::OuCheck(a) => ("ou-check", commands::ou_check(a, cli.config.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            eprintln!("error: {e}");
            if let Some(sub) = Cli::command().find_subcommand_mut(name) {
                eprintln!("{}", sub.render_usage());
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

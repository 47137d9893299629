//! `abf`: tables, identity checks and the lattice-to-continuum comparison for
//! the ABF model in regime II.
//!
//! Exit status: 0 on success, 1 when `verify` finds a residual above its
//! threshold, 2 for invalid arguments or parameters.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use abf::TruncationPolicy;
use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "abf", version, about = "ABF model in regime II: weights, LHPs, form factors and their scaling limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Boltzmann weights of admissible faces and relation residuals.
    Weights(commands::WeightsArgs),
    /// One-point and neighbouring-height probabilities.
    Lhp(commands::LhpArgs),
    /// Lattice form factor traces Q_a^{(n,n)}(m) and Q-hat_a.
    TraceFf(commands::TraceArgs),
    /// Lattice against continuum form factors along an x-sequence.
    ScalingFf(commands::ScalingArgs),
    /// S_ab on a rapidity grid.
    Smatrix(commands::SmatrixArgs),
    /// Run the identity suites and report residuals.
    Verify(commands::VerifyArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Relative cutoff for every truncated series.
    #[arg(long, env = TruncationPolicy::ENV_EPS)]
    pub eps: Option<f64>,
    /// Hard cap on terms per series.
    #[arg(long, env = TruncationPolicy::ENV_MAX_TERMS)]
    pub max_terms: Option<usize>,
    /// Worker threads for grid sweeps (results do not depend on it).
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub threads: usize,
}

impl Common {
    pub fn truncation(&self) -> abf::Result<TruncationPolicy> {
        let d = TruncationPolicy::default();
        TruncationPolicy::new(self.eps.unwrap_or(d.eps), self.max_terms.unwrap_or(d.max_terms))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

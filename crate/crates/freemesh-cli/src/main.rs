//! Command-line front end: fit, evaluate, benchmark, sweep, and kernel
//! validation with CSV/binary file I/O.
//!
//! Exit codes are a stable contract:
//! 0 success, 1 input format, 2 precondition, 3 tree-version mismatch,
//! 4 numerical conditioning.

mod commands;
mod csvio;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn conditioning(msg: impl Into<String>) -> Self {
        Self {
            code: 4,
            msg: msg.into(),
        }
    }
}

impl From<freemesh::Error> for CliError {
    fn from(e: freemesh::Error) -> Self {
        use freemesh::Error;
        let code = match &e {
            Error::TreeFormat { .. } => 1,
            Error::VersionMismatch { .. } => 3,
            Error::IllConditioned { .. }
            | Error::SingularPivot { .. }
            | Error::NoConvergence { .. } => 4,
            _ => 2,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "freemesh",
    version,
    about = "Scattered-data interpolation via octree-scoped local polynomial fits"
)]
struct Cli {
    /// Extra diagnostics on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an octree interpolant to x1,x2,x3,f samples from a CSV file.
    Fit {
        /// Input CSV with header x1,x2,x3,f.
        #[arg(long)]
        input: PathBuf,
        /// Expansion order of the local fits.
        #[arg(short = 'l', long)]
        lmax: usize,
        /// Residual RMS threshold driving octant refinement.
        #[arg(short = 't', long)]
        tau: f64,
        /// Output tree file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a fitted tree at query points.
    Eval {
        /// Tree file produced by fit.
        #[arg(long)]
        tree: PathBuf,
        /// Query CSV with header x1,x2,x3.
        #[arg(long)]
        query: PathBuf,
        /// Output CSV with header x1,x2,x3,f_interp.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run one benchmark experiment (fit grid p, evaluate on grid q).
    Bench {
        /// Test function: franke3d or poly<degree> (e.g. poly6).
        #[arg(long, default_value = "franke3d")]
        function: String,
        /// Fit-grid size.
        #[arg(short = 'n', long)]
        np: usize,
        /// Query-grid size (defaults to np).
        #[arg(long)]
        nq: Option<usize>,
        #[arg(short = 'l', long)]
        lmax: usize,
        #[arg(short = 't', long)]
        tau: f64,
        #[arg(long, default_value_t = 1)]
        seed_p: u64,
        #[arg(long, default_value_t = 2)]
        seed_q: u64,
        /// Append the result as a CSV row (with header) to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Allow grids beyond the desk-scale cap of 8^6 points.
        #[arg(long)]
        allow_large: bool,
    },
    /// Run a Cartesian sweep of benchmark experiments.
    Sweep {
        /// Test function: franke3d or poly<degree>.
        #[arg(long, default_value = "franke3d")]
        function: String,
        /// Comma-separated grid sizes (sets both n_p and n_q).
        #[arg(short = 'n', long)]
        np: String,
        /// Comma-separated expansion orders.
        #[arg(short = 'l', long)]
        lmax: String,
        /// Comma-separated thresholds.
        #[arg(short = 't', long)]
        tau: String,
        #[arg(long, default_value_t = 1)]
        seed_p: u64,
        #[arg(long, default_value_t = 2)]
        seed_q: u64,
        /// CSV output file for all rows.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        allow_large: bool,
    },
    /// Validate the factored kernel and its generalized inverse against
    /// the direct Gramian.
    KernelValidate {
        /// Points in the factored-vs-direct comparison grid.
        #[arg(short = 'n', long, default_value_t = 30)]
        n: usize,
        /// Gaussian shape parameter.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(short = 'l', long, default_value_t = 8)]
        lmax: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("FMT_THREADS") {
        let threads: usize = v.parse().map_err(|_| {
            CliError::precondition(format!("FMT_THREADS must be a positive integer, got '{v}'"))
        })?;
        if threads == 0 {
            return Err(CliError::precondition(
                "FMT_THREADS must be a positive integer",
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::precondition(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let run = init_thread_pool().and_then(|()| match cli.command {
        Command::Fit {
            input,
            lmax,
            tau,
            output,
        } => commands::fit(&input, lmax, tau, &output, cli.verbose),
        Command::Eval {
            tree,
            query,
            output,
        } => commands::eval(&tree, &query, &output),
        Command::Bench {
            function,
            np,
            nq,
            lmax,
            tau,
            seed_p,
            seed_q,
            csv,
            allow_large,
        } => commands::bench(
            &function,
            np,
            nq,
            lmax,
            tau,
            seed_p,
            seed_q,
            csv.as_deref(),
            allow_large,
        ),
        Command::Sweep {
            function,
            np,
            lmax,
            tau,
            seed_p,
            seed_q,
            csv,
            allow_large,
        } => commands::sweep(
            &function,
            &np,
            &lmax,
            &tau,
            seed_p,
            seed_q,
            csv.as_deref(),
            allow_large,
        ),
        Command::KernelValidate { n, eps, lmax, seed } => {
            commands::kernel_validate(n, eps, lmax, seed)
        }
    });
    if let Err(e) = run {
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code as i32);
    }
}

//! `pekar` — a numerical laboratory for the mean-field polaron measure:
//! variational solver, Coulomb functionals, path-space sampler, Pekar SDE
//! and the verification report.

mod commands;
mod config;
mod experiment;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pekar", version, about = "Mean-field polaron laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the variational problem and write the solution bundle.
    Solve {
        #[arg(long, default_value_t = 20.0)]
        rmax: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
        #[arg(long, default_value_t = 0.5)]
        mixing: f64,
        #[arg(long, default_value_t = 400)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coulomb functionals of a stored occupation measure.
    Coulomb {
        /// CSV (x,y,z,w) with a JSON sidecar carrying the softening.
        #[arg(long)]
        measure: PathBuf,
        /// Evaluation lattice as cx,cy,cz:half:spacing.
        #[arg(long, default_value = "0,0,0:6:0.5")]
        eval_grid: String,
        /// Solution directory enabling best-shift statistics.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Metropolis chain (or a tempering ladder) for the tilted measure.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Run the whole beta ladder with replica exchange.
        #[arg(long)]
        ladder: bool,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the Pekar SDE and verify its stationary radial law.
    Sde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Thermodynamic-integration estimate of (1/t) log Z_t.
    FreeEnergy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recheck the verification sections of an existing run directory.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: solve, sample, SDE, free energy, report.
    RunAll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 keeps the rayon default).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print the default configuration JSON.
    DefaultConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { rmax, n, tol, mixing, max_iter, out } => {
            commands::cmd_solve(rmax, n, tol, mixing, max_iter, &out).map(|()| 0)
        }
        Command::Coulomb { measure, eval_grid, solution, out } => {
            commands::cmd_coulomb(&measure, &eval_grid, solution.as_deref(), out.as_deref())
                .map(|()| 0)
        }
        Command::Sample { config, t, beta, ladder, solution, seed, out } => {
            commands::cmd_sample(&config, t, beta, ladder, solution.as_deref(), seed, &out)
                .map(|()| 0)
        }
        Command::Sde { config, solution, seed, out } => {
            commands::cmd_sde(&config, &solution, seed, &out).map(|_| 0)
        }
        Command::FreeEnergy { config, seed, out } => {
            commands::cmd_free_energy(&config, seed, &out).map(|()| 0)
        }
        Command::Verify { input, out } => commands::cmd_verify(&input, out.as_deref()),
        Command::RunAll { config, seed, out, threads } => {
            commands::cmd_run_all(&config, seed, &out, threads)
        }
        Command::DefaultConfig => {
            println!("{}", commands::default_config_json());
            Ok(0)
        }
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

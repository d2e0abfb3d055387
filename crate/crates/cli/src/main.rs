use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod ranges;

use ranges::{parse_f64_grid, parse_usize_grid, Grid};

/// Entanglement distillation for fermionic quasifree states.
#[derive(Debug, Parser)]
#[command(name = "fermidistill", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Copy)]
struct Seed {
    #[arg(long, env = "FERMIDISTILL_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a covariance file and list every violated invariant.
    Validate { file: PathBuf },
    /// Optimal protocol report (JSON).
    #[command(allow_negative_numbers = true)]
    Protocol {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Also sample this many random protocols and report the best pf.
        #[arg(long, value_name = "T")]
        sample_suboptimal: Option<usize>,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// Optimal reports for m = 2..=m_max (JSON).
    ScanM {
        file: PathBuf,
        #[arg(long)]
        m_max: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Compare the Pfaffian formulas with dense Fock-space computations (at most 6 modes).
    #[command(allow_negative_numbers = true)]
    Oracle {
        file: PathBuf,
        /// Pure target state; defaults to a random maximally entangled one.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// Two- and four-mode closed forms.
    #[command(subcommand)]
    ClosedForm(ClosedForm),
    /// Free fermions on a line: two blocks of length L at distance N.
    #[command(subcommand)]
    Lattice(Lattice),
    /// Matvec and Lanczos timings.
    #[command(allow_negative_numbers = true)]
    Bench {
        #[arg(long = "L", default_value_t = 131072)]
        l: usize,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 15)]
        reps: usize,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Subcommand)]
enum ClosedForm {
    /// One mode per party, parameters a, b, c, d.
    #[command(allow_negative_numbers = true)]
    TwoMode {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        d: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Two modes per party with Y = sigma I.
    #[command(allow_negative_numbers = true)]
    FourMode {
        /// nu_1,nu_2,nu_3,nu_4
        #[arg(long, value_delimiter = ',', required = true)]
        nu: Vec<f64>,
        #[arg(long)]
        sigma: f64,
        /// Also write the covariance file of the state.
        #[arg(long)]
        emit: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// f against g over nu_1 = nu_2 = x, nu_3 = nu_4 = y (CSV).
    #[command(allow_negative_numbers = true)]
    FgScan {
        #[arg(long, value_parser = parse_f64_grid, allow_hyphen_values = true)]
        x: Grid<f64>,
        #[arg(long, value_parser = parse_f64_grid, allow_hyphen_values = true)]
        y: Grid<f64>,
        #[arg(long)]
        sigma: f64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitColumn {
    F,
    P,
}

#[derive(Debug, Subcommand)]
enum Lattice {
    /// Protocol quantities over an (L, N) grid (CSV).
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[arg(long = "L", value_parser = parse_usize_grid)]
        l: Grid<usize>,
        #[arg(long = "N", value_parser = parse_usize_grid)]
        n: Grid<usize>,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        /// Write wall_ms = 0 so output is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// Fit 1 - b / L^a to a sweep CSV, one fit per N (JSON).
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Restrict to these distances.
        #[arg(long = "N", value_parser = parse_usize_grid)]
        n: Option<Grid<usize>>,
        #[arg(long = "L-min", default_value_t = 20000.0)]
        l_min: f64,
        #[arg(long, value_enum, default_value_t = FitColumn::F)]
        column: FitColumn,
        #[command(flatten)]
        output: Output,
    },
    /// Smallest L with f >= x for each N (JSON).
    #[command(allow_negative_numbers = true)]
    Minlen {
        #[arg(long = "N", value_parser = parse_usize_grid)]
        n: Grid<usize>,
        #[arg(long, default_value_t = 0.9)]
        x: f64,
        #[arg(long = "L-lo", default_value_t = 2)]
        l_lo: usize,
        #[arg(long = "L-hi", default_value_t = 100000)]
        l_hi: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
}

/// Arguments that parse but do not make sense together.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

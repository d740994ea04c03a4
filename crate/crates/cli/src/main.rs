mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lodegp::kernelalg::CompileMode;
use lodegp::Error;

#[derive(Parser)]
#[command(name = "lodegp", version, about = "Gaussian processes that satisfy linear ODE systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A system argument is a path to a JSON spec or the name of a built-in.
#[derive(Subcommand)]
enum Command {
    /// Smith normal form of a system's operator matrix.
    Snf {
        system: String,
        #[arg(long)]
        json: bool,
    },
    /// Covariance entries of the constrained GP prior.
    Kernel {
        system: String,
        #[arg(long, value_enum, default_value_t = Mode::Symbolic)]
        mode: Mode,
        #[arg(long)]
        json: bool,
    },
    /// Print a built-in system as a JSON spec.
    System { name: String },
    /// Sample a training CSV from a system's reference solution.
    Data {
        system: String,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        noise: Switch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the system's training interval.
        #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
        interval: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train a model on a CSV with header `t,<channels>`.
    Fit {
        system: String,
        data: PathBuf,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Symbolic)]
        mode: Mode,
        /// Fit the independent squared-exponential baseline instead.
        #[arg(long)]
        baseline: bool,
        /// Model JSON destination.
        #[arg(short, long)]
        output: PathBuf,
        /// Result JSON destination; printed to stdout when absent.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        eval_points: usize,
        /// Grid size for the eigenvalue count; 0 skips it.
        #[arg(long, default_value_t = 300)]
        eig_points: usize,
    },
    /// Posterior mean and variance on a grid.
    Predict {
        model: PathBuf,
        /// `a:b:n`, n evenly spaced points from a to b.
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Grid,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Joint posterior draws on a grid.
    Sample {
        model: PathBuf,
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Grid,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Draw from the prior instead of the posterior.
        #[arg(long)]
        prior: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// ODE residual of a model's posterior mean, plus its eigenvalue count.
    Verify {
        model: PathBuf,
        /// System whose equations are checked; defaults to the model's own.
        system: Option<String>,
        #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
        interval: Option<Vec<f64>>,
        #[arg(long, default_value_t = 300)]
        eig_points: usize,
    },
    /// Repeated generate, fit and evaluate runs on a built-in system.
    Experiment {
        name: String,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        noise: Switch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for per-run files and the aggregate.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Concurrent runs; `LODEGP_JOBS` overrides.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 25)]
        train_points: usize,
        #[arg(long, default_value_t = 1000)]
        eval_points: usize,
        #[arg(long, default_value_t = 300)]
        eig_points: usize,
        #[arg(long)]
        no_baseline: bool,
        /// Print the aggregate JSON instead of the summary table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Symbolic,
    Refactorize,
}

impl From<Mode> for CompileMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Symbolic => CompileMode::Symbolic,
            Mode::Refactorize => CompileMode::Refactorize,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Evenly spaced query times.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(format!("expected a:b:n, got `{s}`"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
    let (a, b) = (num(a)?, num(b)?);
    let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a point count"))?;
    if !a.is_finite() || !b.is_finite() || a > b || n == 0 || (n == 1 && a != b) {
        return Err(format!("`{s}` is not a valid grid"));
    }
    Ok(Grid(lodegp::systems::linspace(a, b, n)))
}

/// 2 for malformed input, 3 for data problems, 4 for numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::InvalidInput(_)
        | Error::UnknownSystem(_)
        | Error::UnboundSymbol(_)
        | Error::ShapeMismatch(_)
        | Error::NotDiagonal
        | Error::EmptySelection => 2,
        Error::Data(_) | Error::Io(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Diverged { trace, .. } = &e {
                let shown: Vec<String> = trace.iter().map(f64::to_string).collect();
                eprintln!("loss trace: {}", shown.join(" "));
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:6:6").unwrap().0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(parse_grid("-2:-2:1").unwrap().0, vec![-2.0]);
        for bad in ["1:6", "6:1:5", "1:6:0", "a:2:3", "1:2:-1", "1:2:1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}

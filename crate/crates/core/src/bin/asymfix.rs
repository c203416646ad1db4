use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asymfix::pipeline::{run, Command};
use asymfix::problem::{CliOverrides, Problem};

/// Construct and validate exact solutions near an asymptotic family.
#[derive(Parser, Debug)]
#[command(name = "asymfix", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Fit the exponents and evaluate the sufficient conditions.
    Check(Args),
    /// Construct the solution for one parameter value and emit a CSV.
    Solve(Args),
    /// Construct and compare against the reference integrator.
    Verify(Args),
    /// Verify over a parameter grid and judge uniformity.
    Sweep(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Parameter value as a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    /// Directory receiving report.json, report.txt and solution.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the random sampling of the quadratic bound.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tmax_factor: Option<f64>,
    #[arg(long)]
    points_per_decade: Option<usize>,
}

fn main() -> ExitCode {
    // Exit status 2 is reserved for failed conditions, so usage errors map to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Sub::Check(a) => (Command::Check, a),
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    let overrides = CliOverrides {
        seed: args.seed,
        tmax_factor: args.tmax_factor,
        points_per_decade: args.points_per_decade,
    };
    let problem = match Problem::load(&args.problem, &overrides) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", args.problem.display());
            return ExitCode::from(1);
        }
    };
    let output = run(&problem, command, args.alpha.map(|a| vec![a]));
    let text = output.report.to_text();
    print!("{text}");
    if let Some(dir) = &args.out {
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("report.json"), output.report.to_json())?;
            std::fs::write(dir.join("report.txt"), &text)?;
            if let Some(csv) = &output.csv {
                std::fs::write(dir.join("solution.csv"), csv)?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            eprintln!("error: writing {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    if let Some(m) = &output.report.message {
        if output.report.exit_code != 0 {
            eprintln!("{}: {m}", output.report.verdict_word());
        }
    }
    ExitCode::from(output.report.exit_code as u8)
}

//! `bergflow run | fit | diff`.

use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use bergflow::cli::{
    fit_series, load_report, output_dir, read_csv, report_diff, run, write_outputs, ExitCode, ExperimentConfig,
    RateModel, RunError,
};
use bergflow::report::Status;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bergflow", version, about = "Relative Kähler–Ricci flow and Bergman iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Write outputs here instead of `$BERGFLOW_OUTPUT_ROOT/<output>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a rate to two columns of a CSV (default: the first two).
    Fit {
        csv: PathBuf,
        /// `power` or `exponential`.
        model: RateModel,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
    },
    /// Compare two summary.json reports; exits 1 when they differ.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Relative tolerance for numeric fields.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

fn code(c: ExitCode) -> ProcessExit {
    ProcessExit::from(c as u8)
}

fn main() -> ProcessExit {
    match Cli::parse().command {
        Command::Run { config, out } => run_command(&config, out),
        Command::Fit { csv, model, x, y } => {
            let fit = read_csv(&csv).and_then(|s| fit_series(&s, x.as_deref(), y.as_deref(), model));
            match fit {
                Ok(f) => {
                    println!("{}", serde_json::to_string(&f).expect("fit serializes"));
                    code(ExitCode::Pass)
                }
                Err(e) => {
                    eprintln!("fit: {e}");
                    code(ExitCode::ConfigurationError)
                }
            }
        }
        Command::Diff { a, b, tol } => {
            let reports = load_report(&a).and_then(|ra| Ok((ra, load_report(&b)?)));
            let diff = reports.and_then(|(ra, rb)| report_diff(&ra, &rb, tol).map_err(|e| e.to_string()));
            match diff {
                Ok(d) => {
                    println!("{}", serde_json::to_string_pretty(&d).expect("diff serializes"));
                    code(if d.is_empty() { ExitCode::Pass } else { ExitCode::AssertionFailure })
                }
                Err(e) => {
                    eprintln!("diff: {e}");
                    code(ExitCode::ConfigurationError)
                }
            }
        }
    }
}

fn run_command(config: &std::path::Path, out: Option<PathBuf>) -> ProcessExit {
    let result = ExperimentConfig::load(config).map_err(RunError::from).and_then(|cfg| {
        let report = run(&cfg)?;
        let dir = out.unwrap_or_else(|| output_dir(&cfg));
        write_outputs(&report, &dir)?;
        Ok((report, dir))
    });
    match result {
        Ok((report, dir)) => {
            for a in &report.assertions {
                let tag = match a.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skipped => "SKIP",
                };
                println!("{tag} {}: {}", a.name, a.detail);
            }
            if let Some(f) = &report.failure {
                println!("numerical failure: {f}");
            }
            println!("wrote {}", dir.display());
            code(ExitCode::of_report(&report))
        }
        Err(e) => {
            eprintln!("run: {e}");
            code(ExitCode::of_error(&e))
        }
    }
}

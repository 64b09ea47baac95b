//! `qbo` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qbo::config::parse_config;
use qbo::error::QboError;
use qbo::estimators::{chebyshev_queries, qmc2_queries};
use qbo::harness::{
    load_traces, manifest_sigma, run_experiment, summarize, summary_to_csv, write_atomic,
};
use qbo::plot::{bundle_curves, render_svg, CurveInput, PlotKind};

#[derive(Parser)]
#[command(name = "qbo", about = "Query-budget Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKindArg {
    Regret,
    Mae,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Parallel worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate best-MAE statistics from a run directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Render a regret or MAE plot from a run directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: PlotKindArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print classical (Chebyshev) and quantum (QMC) query counts for a
    /// mean estimation at the given noise / accuracy / confidence.
    Queries {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                QboError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run() -> qbo::Result<()> {
    match Cli::parse().command {
        Command::Run { config, jobs, out } => {
            let cfg = parse_config(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| QboError::Config(format!("cannot build thread pool: {e}")))?
                .install(|| run_experiment(&cfg, &out_dir))?;
            println!("artifacts written to {}", out_dir.display());
            Ok(())
        }
        Command::Summarize { input } => {
            let sigma = manifest_sigma(&input)?;
            let traces = load_traces(&input)?;
            let best: Vec<(String, f64, f64)> = traces
                .iter()
                .map(|t| (t.method.clone(), sigma, t.best_mae()))
                .collect();
            print!("{}", summary_to_csv(&summarize(&best)));
            Ok(())
        }
        Command::Plot { input, kind, out } => {
            let traces = load_traces(&input)?;
            let kind = match kind {
                PlotKindArg::Regret => PlotKind::CumulativeRegret,
                PlotKindArg::Mae => PlotKind::IncumbentMae,
            };
            let curves: Vec<CurveInput> = traces
                .iter()
                .map(|t| CurveInput {
                    method: t.method.clone(),
                    values: match kind {
                        PlotKind::CumulativeRegret => t.cumulative_regret.clone(),
                        PlotKind::IncumbentMae => t.incumbent_mae.clone(),
                    },
                })
                .collect();
            write_atomic(&out, &render_svg(&bundle_curves(&curves)?, kind)?)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Queries { sigma, epsilon, delta, c2 } => {
            let classical = chebyshev_queries(sigma, epsilon, delta)?;
            println!("chebyshev = {classical}");
            match qmc2_queries(sigma, epsilon, delta, c2) {
                Ok(q) => println!("qmc = {q}"),
                Err(e) => println!("qmc = n/a ({e})"),
            }
            Ok(())
        }
    }
}

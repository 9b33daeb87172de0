use clap::{Parser, Subcommand};

use mixedcurv::cli::{list_builtins, run, RunConfig};

#[derive(Parser)]
#[command(
    name = "mixedcurv",
    about = "Curvature invariants of almost k-product manifolds: scenario checks and reports",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's check plan and report the verdicts.
    Verify {
        /// Scenario JSON file, or builtin:<name>.
        scenario: Option<String>,
        /// Grid points per axis on the source manifold.
        #[arg(long)]
        grid: Option<usize>,
        /// Optimizer restarts per sample point.
        #[arg(long)]
        restarts: Option<usize>,
        /// Seed for all randomized components.
        #[arg(long)]
        seed: Option<u64>,
        /// Equality band on inequality gaps.
        #[arg(long = "tol-eq")]
        tol_eq: Option<f64>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<std::path::PathBuf>,
        /// Write the per-(check, point) CSV sweep here.
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
        /// List the built-in scenarios and exit.
        #[arg(long)]
        list_builtins: bool,
        /// Print one line per check record.
        #[arg(short, long)]
        verbose: bool,
    },
}

fn main() {
    let args = Args::parse();
    match args.command {
        Command::Verify {
            scenario,
            grid,
            restarts,
            seed,
            tol_eq,
            report,
            csv,
            list_builtins: list,
            verbose,
        } => {
            if list {
                print!("{}", list_builtins());
                std::process::exit(0);
            }
            let Some(scenario) = scenario else {
                eprintln!("error: a scenario path or builtin:<name> is required (or --list-builtins)");
                std::process::exit(2);
            };
            let cfg = RunConfig {
                scenario,
                grid,
                restarts,
                seed,
                tol_eq,
                report_path: report,
                csv_path: csv,
                verbose,
            };
            std::process::exit(run(&cfg));
        }
    }
}

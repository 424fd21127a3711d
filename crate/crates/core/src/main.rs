use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gradnet::experiment::{run_function_approx, run_pde_uq, run_theory_checks, ExperimentConfig, ExperimentKind};
use gradnet::pde::{Grid2D, LinearSolver, PdeProblem};

#[derive(Parser)]
#[command(name = "gradnet", version, about = "Gradient-enhanced two-layer network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regression of an analytic target across sample sizes and enhancement levels.
    Approx(RunArgs),
    /// Surrogate of the stochastic PDE quantity of interest.
    Uq(RunArgs),
    /// Numerical checks of the approximation and generalization bounds.
    Theory(RunArgs),
    /// Solve one PDE realization and print the QoI and its gradient.
    SolvePde(SolveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the replication seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Width 1000 and longer training budgets.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    /// Comma-separated random coordinates Y in [-1, 1].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    y: Vec<f64>,
    /// Interior grid size (odd).
    #[arg(long, default_value_t = 63)]
    grid: usize,
    /// Use conjugate gradients instead of the banded Cholesky solve.
    #[arg(long)]
    cg: bool,
}

fn load_config(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::for_kind(kind),
    };
    config.kind = kind;
    if args.paper_scale {
        config.train = config.train.clone().paper_scale();
    }
    if let Some(s) = args.seed {
        config.seeds = vec![s];
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(w) = args.width {
        config.train.width = w;
    }
    if let Some(d) = args.d {
        config.d = d;
    }
    if let Some(t) = &args.target {
        config.target = t.clone();
    }
    config.out = args.out.clone().or(config.out);
    Ok(config)
}

fn print_medians(summary: &serde_json::Value) {
    for row in summary["medians"].as_array().into_iter().flatten() {
        println!(
            "n={:<6} X={:<5} median rel L2 = {}",
            row["n"], row["enhancement"], row["median_rel_l2_error"]
        );
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Approx(args) => {
            let run = run_function_approx(&load_config(&args, ExperimentKind::FunctionApprox)?)?;
            print_medians(&run.summary);
        }
        Command::Uq(args) => {
            let run = run_pde_uq(&load_config(&args, ExperimentKind::PdeUq)?)?;
            print_medians(&run.summary);
        }
        Command::Theory(args) => {
            let report = run_theory_checks(&load_config(&args, ExperimentKind::TheoryCheck)?)?;
            for c in &report.checks {
                println!("{:<20} {}", c.check.name(), if c.passed { "PASS" } else { "FAIL" });
            }
            if !report.all_passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::SolvePde(args) => {
            let solver = if args.cg { LinearSolver::Cg { tol: 1e-10 } } else { LinearSolver::Cholesky };
            let problem = PdeProblem::new(Grid2D::new(args.grid)?)?.with_solver(solver);
            let r = problem.realize(&args.y)?;
            println!("{}", serde_json::json!({ "y": r.y, "q": r.q, "q_grad": r.q_grad }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

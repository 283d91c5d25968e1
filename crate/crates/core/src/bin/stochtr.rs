use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stochtr::harness::{apply_config_file, emit_csv, run_experiment, ExperimentSpec, HarnessError, ProblemSpec, SolverKind};
use stochtr::problems::Graph;

#[derive(Parser)]
#[command(name = "stochtr", version, about = "Stochastic trust-region experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Himmelblau,
    Qaoa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Vmi1,
    Vmi2,
    Vmi3,
    Astrodf,
    Neldermead,
    Spsa,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Vmi1 => SolverKind::Vmi1,
            Solver::Vmi2 => SolverKind::Vmi2,
            Solver::Vmi3 => SolverKind::Vmi3,
            Solver::Astrodf => SolverKind::AstroDf,
            Solver::Neldermead => SolverKind::NelderMead,
            Solver::Spsa => SolverKind::Spsa,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run macro-replications of one solver and write the progress curve.
    Run {
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long, value_enum)]
        solver: Solver,
        /// Cost per communication.
        #[arg(long, default_value_t = 0.0)]
        cn: f64,
        /// Cost per shot.
        #[arg(long, default_value_t = 1.0)]
        cs: f64,
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge-list file for QAOA (default: 5-cycle).
        #[arg(long)]
        graph: Option<PathBuf>,
        /// QAOA depth.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        /// Himmelblau noise scale.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
        /// `key = value` overrides for solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn build_spec(cmd: &Command) -> Result<(ExperimentSpec, PathBuf), HarnessError> {
    let Command::Run {
        problem,
        solver,
        cn,
        cs,
        budget,
        reps,
        seed,
        graph,
        depth,
        noise,
        out,
        config,
    } = cmd;
    let problem = match problem {
        Problem::Himmelblau => {
            if !(*noise >= 0.0 && noise.is_finite()) {
                return Err(HarnessError::Spec(format!("invalid noise scale {noise}")));
            }
            ProblemSpec::Himmelblau { scale: *noise }
        }
        Problem::Qaoa => {
            if *depth == 0 {
                return Err(HarnessError::Spec("QAOA depth must be at least 1".into()));
            }
            let graph = match graph {
                Some(path) => Graph::from_file(path).map_err(|e| HarnessError::Spec(e.to_string()))?,
                None => Graph::cycle(5)?,
            };
            ProblemSpec::Qaoa { graph, depth: *depth }
        }
    };
    let mut spec = ExperimentSpec::new(problem, (*solver).into());
    spec.comm_cost = *cn;
    spec.shot_cost = *cs;
    spec.budget = *budget;
    spec.reps = *reps;
    spec.seed = *seed;
    if let Some(path) = config {
        apply_config_file(&mut spec, path).map_err(|e| match e {
            HarnessError::Io(io) => HarnessError::Spec(format!("reading {}: {io}", path.display())),
            other => other,
        })?;
    }
    spec.validate()?;
    Ok((spec, out.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (spec, out) = match build_spec(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_config_error() { 2 } else { 1 });
        }
    };
    if let Err(e) = emit_csv(&result.curve, &out) {
        eprintln!("error: writing {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let last = result.curve.summary.last().expect("curve has at least one point");
    println!(
        "{} on {} reps: final true value {:.6} (95% CI {:.6} .. {:.6})",
        spec.solver, spec.reps, last.mean, last.lower, last.upper
    );
    if let Some(gap) = result.mean_final_gap() {
        println!("mean optimality gap of final answers: {gap:.6}");
    }
    println!("wrote {}", out.display());
    ExitCode::SUCCESS
}

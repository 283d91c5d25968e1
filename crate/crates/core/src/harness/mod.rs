//! Experiment runner: macro-replications, budget-grid progress curves,
//! confidence bands and CSV output.

mod config_file;
mod curve;
mod profile;

pub use config_file::{apply_config_file, apply_config_text};
pub use curve::{budget_grid, emit_csv, read_csv, write_csv, CsvRow, CurvePoint, ProgressCurve, CSV_HEADER};
pub use profile::{average_ranks, incumbent_moments, spearman, IncumbentMoments};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{run_nelder_mead, run_spsa, NelderMeadConfig, SpsaConfig};
use crate::oracle::{CostLedger, OracleHandle, SeedStream, StochasticOracle};
use crate::problems::{himmelblau_mean, Graph, Himmelblau, ProblemError, QaoaOracle};
use crate::sampling::LambdaSchedule;
use crate::solver::{run, ConfigError, RunResult, SamplingStrategy, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Whether the error stems from invalid user input rather than I/O.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Spec(_) | HarnessError::Problem(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// Himmelblau with noise variance `scale·|(x₁−3)(x₂−2)|`.
    Himmelblau { scale: f64 },
    Qaoa { graph: Graph, depth: usize },
}

impl ProblemSpec {
    pub fn oracle(&self) -> Arc<dyn StochasticOracle> {
        match self {
            ProblemSpec::Himmelblau { scale } => Arc::new(Himmelblau::new(*scale)),
            ProblemSpec::Qaoa { graph, depth } => Arc::new(QaoaOracle::new(graph.clone(), *depth)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Himmelblau { .. } => 2,
            ProblemSpec::Qaoa { depth, .. } => 2 * depth,
        }
    }

    /// `(−5, −5)` for Himmelblau; all angles 0.1 for QAOA.
    pub fn default_start(&self) -> DVector<f64> {
        match self {
            ProblemSpec::Himmelblau { .. } => DVector::from_vec(vec![-5.0, -5.0]),
            ProblemSpec::Qaoa { depth, .. } => DVector::from_element(2 * depth, 0.1),
        }
    }

    pub fn default_radius(&self) -> f64 {
        match self {
            ProblemSpec::Himmelblau { .. } => 1.0,
            ProblemSpec::Qaoa { .. } => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Two-stage sampling with a `λ_k` first stage.
    Vmi1,
    /// Two-stage sampling with a variance-model first stage.
    Vmi2,
    /// Two-stage sampling, hybrid first stage.
    Vmi3,
    /// Streaming sampling, no variance model.
    AstroDf,
    NelderMead,
    Spsa,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Vmi1,
        SolverKind::Vmi2,
        SolverKind::Vmi3,
        SolverKind::AstroDf,
        SolverKind::NelderMead,
        SolverKind::Spsa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Vmi1 => "vmi1",
            SolverKind::Vmi2 => "vmi2",
            SolverKind::Vmi3 => "vmi3",
            SolverKind::AstroDf => "astrodf",
            SolverKind::NelderMead => "neldermead",
            SolverKind::Spsa => "spsa",
        }
    }

    /// Trust-region configuration for this solver id (defaults otherwise).
    pub fn solver_config(self) -> SolverConfig {
        let (strategy, variance_model) = match self {
            SolverKind::Vmi1 => (SamplingStrategy::Lambda, true),
            SolverKind::Vmi2 => (SamplingStrategy::VarianceModel, true),
            SolverKind::AstroDf => (SamplingStrategy::Streaming, false),
            _ => (SamplingStrategy::Hybrid, true),
        };
        SolverConfig::with_strategy(strategy, variance_model)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown solver `{s}`")))
    }
}

/// Minimum per-point sample size used for QAOA experiments.
pub const QAOA_MIN_SAMPLES: u64 = 100;

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub solver: SolverKind,
    /// Trust-region settings; the budget field is overwritten by
    /// [`ExperimentSpec::budget`].
    pub solver_config: SolverConfig,
    pub nelder_mead: NelderMeadConfig,
    pub spsa: SpsaConfig,
    pub comm_cost: f64,
    pub shot_cost: f64,
    pub budget: f64,
    pub reps: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub start: Option<DVector<f64>>,
}

impl ExperimentSpec {
    /// Spec with the default settings for `solver` on `problem`.
    pub fn new(problem: ProblemSpec, solver: SolverKind) -> Self {
        let radius = problem.default_radius();
        let spsa = match problem {
            ProblemSpec::Himmelblau { .. } => SpsaConfig {
                a: 0.002,
                c: 0.2,
                ..SpsaConfig::default()
            },
            ProblemSpec::Qaoa { .. } => SpsaConfig::default(),
        };
        let mut solver_config = solver.solver_config().with_delta0(radius);
        match &problem {
            // Scale κ to the objective's magnitude at the start so that the
            // first sample sizes are affordable within a few thousand shots.
            ProblemSpec::Himmelblau { .. } => {
                let x0 = problem.default_start();
                solver_config.sampling.kappa = himmelblau_mean(x0.as_slice()) / (radius * radius);
            }
            // Shot outcomes are discrete; a small first-stage batch can come
            // back all max-cut with zero sample variance at a non-optimal
            // point and freeze the incumbent. A floor of 100 makes that
            // event negligible.
            ProblemSpec::Qaoa { .. } => {
                solver_config.sampling.lambda = LambdaSchedule::Constant(QAOA_MIN_SAMPLES);
            }
        }
        Self {
            solver_config,
            nelder_mead: NelderMeadConfig {
                initial_step: radius,
                ..NelderMeadConfig::default()
            },
            spsa,
            problem,
            solver,
            comm_cost: 0.0,
            shot_cost: 1.0,
            budget: 1e4,
            reps: 20,
            seed: 0,
            grid_points: 200,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps == 0 {
            return Err(HarnessError::Spec("need at least one replication".into()));
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(HarnessError::Spec(format!("invalid budget {}", self.budget)));
        }
        if !(self.comm_cost >= 0.0 && self.shot_cost >= 0.0 && self.comm_cost.is_finite() && self.shot_cost.is_finite())
        {
            return Err(HarnessError::Spec("unit costs must be nonnegative".into()));
        }
        if self.comm_cost + self.shot_cost == 0.0 && self.budget > 0.0 {
            return Err(HarnessError::Spec("at least one unit cost must be positive".into()));
        }
        if self.grid_points < 2 && self.budget > 0.0 {
            return Err(HarnessError::Spec("grid needs at least two points".into()));
        }
        if let Some(x0) = &self.start {
            if x0.len() != self.problem.dim() {
                return Err(HarnessError::Spec(format!(
                    "start point has dimension {}, problem has {}",
                    x0.len(),
                    self.problem.dim()
                )));
            }
        }
        self.solver_config.validate()?;
        if self.nelder_mead.shots < 2 || self.spsa.shots < 1 || self.spsa.a <= 0.0 || self.spsa.c <= 0.0 {
            return Err(HarnessError::Spec("invalid baseline settings".into()));
        }
        Ok(())
    }

    pub fn start_point(&self) -> DVector<f64> {
        self.start.clone().unwrap_or_else(|| self.problem.default_start())
    }
}

/// Runs replication `rep` of `spec` on its own substream.
pub fn run_replication(
    spec: &ExperimentSpec,
    oracle: Arc<dyn StochasticOracle>,
    rep: usize,
) -> Result<RunResult, HarnessError> {
    let handle = OracleHandle::new(oracle, CostLedger::new(spec.comm_cost, spec.shot_cost));
    let root = SeedStream::new(spec.seed, rep as u64);
    let x0 = spec.start_point();
    Ok(match spec.solver {
        SolverKind::NelderMead => {
            let config = NelderMeadConfig {
                budget: spec.budget,
                ..spec.nelder_mead.clone()
            };
            run_nelder_mead(handle, &x0, &config, root)
        }
        SolverKind::Spsa => {
            let config = SpsaConfig {
                budget: spec.budget,
                ..spec.spsa.clone()
            };
            run_spsa(handle, &x0, &config, root)
        }
        _ => {
            let config = spec.solver_config.clone().with_budget(spec.budget);
            run(handle, &x0, &config, root)?
        }
    })
}

/// Final answer of one replication, valued with the exact objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSummary {
    pub rep: usize,
    pub best: DVector<f64>,
    pub best_estimate: Option<f64>,
    pub true_value: f64,
    pub gap: Option<f64>,
    pub cost: f64,
    pub communications: u64,
    pub shots: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub curve: ProgressCurve,
    pub finals: Vec<RepSummary>,
    pub runs: Vec<RunResult>,
}

impl ExperimentResult {
    pub fn mean_final_true_value(&self) -> f64 {
        self.finals.iter().map(|f| f.true_value).sum::<f64>() / self.finals.len() as f64
    }

    pub fn mean_final_gap(&self) -> Option<f64> {
        let gaps: Option<Vec<f64>> = self.finals.iter().map(|f| f.gap).collect();
        gaps.map(|g| g.iter().sum::<f64>() / g.len() as f64)
    }
}

/// Shots used for post-hoc valuation when a problem has no exact mean.
pub const POST_HOC_SHOTS: u64 = 100_000;

/// True objective value: the exact mean when available, otherwise a
/// high-shot estimate that is not charged to any ledger.
pub fn true_value(oracle: &dyn StochasticOracle, x: &DVector<f64>, seed: u64) -> f64 {
    oracle.exact_mean(x.as_slice()).unwrap_or_else(|| {
        let mut stream = SeedStream::new(seed, u64::MAX);
        oracle.draw(x.as_slice(), POST_HOC_SHOTS, &mut stream).mean()
    })
}

/// Runs all replications in parallel and assembles the progress curve.
/// Results are ordered by replication index.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let oracle = spec.problem.oracle();
    let runs: Vec<RunResult> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_replication(spec, oracle.clone(), rep))
        .collect::<Result<_, _>>()?;
    let x0 = spec.start_point();
    let curve = ProgressCurve::build(spec, oracle.as_ref(), &runs, &x0);
    let f_min = oracle.optimal_value();
    let finals = runs
        .iter()
        .enumerate()
        .map(|(rep, r)| {
            let tv = true_value(oracle.as_ref(), &r.best, spec.seed);
            RepSummary {
                rep,
                best: r.best.clone(),
                best_estimate: r.best_estimate,
                true_value: tv,
                gap: f_min.map(|m| tv - m),
                cost: r.ledger.total_cost(),
                communications: r.ledger.communications(),
                shots: r.ledger.shots(),
                iterations: r.iterations,
            }
        })
        .collect();
    Ok(ExperimentResult { curve, finals, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_ids_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.as_str().parse::<SolverKind>().unwrap(), k);
        }
        assert!("bogus".parse::<SolverKind>().is_err());
    }

    #[test]
    fn zero_budget_gives_start_value() {
        let mut spec = ExperimentSpec::new(ProblemSpec::Himmelblau { scale: 1.0 }, SolverKind::Vmi3);
        spec.budget = 0.0;
        spec.reps = 1;
        let r = run_experiment(&spec).unwrap();
        assert_eq!(r.curve.rows.len(), 1);
        let expected = crate::problems::himmelblau_mean(&[-5.0, -5.0]);
        assert_eq!(r.curve.rows[0].true_value, expected);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = ExperimentSpec::new(ProblemSpec::Himmelblau { scale: 1.0 }, SolverKind::Spsa);
        spec.reps = 0;
        assert!(run_experiment(&spec).unwrap_err().is_config_error());
    }
}

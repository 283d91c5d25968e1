//! The trust-region loop.
//!
//! Each iteration picks a design set of `2d + 1` points in `B(X_k; Δ_k)`
//! (reusing the farthest history point when possible), optionally steers
//! one design point toward low predicted variance using a quadratic model
//! of the sample variances, estimates every design point, builds a
//! diagonal quadratic model, minimizes it over the trust region, and
//! applies the four-case update rule. A design point that beats the model
//! candidate by a sufficient margin is accepted directly.
//!
//! With the variance model disabled and [`SamplingStrategy::Streaming`] the
//! loop is the history-informed trust-region method with streaming
//! adaptive sampling.

mod config;
mod history;
mod update;

pub use config::{ConfigError, SamplingStrategy, SolverConfig};
pub use history::History;
pub use update::{update_rule, Decision, Outcome, Reductions};

use std::collections::HashSet;

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{choose_design_set, DesignSet, GeometryError, MIN_DESIGN_RCOND, POINT_TOLERANCE};
use crate::models::{build_interpolation, build_variance_model, poisedness_rcond, ModelError, QuadDiagModel, VarianceFit};
use crate::oracle::{CostLedger, OracleError, OracleHandle, SeedStream};
use crate::sampling::{
    continue_streaming, reevaluate, streaming_adaptive, two_stage_hybrid, two_stage_lambda, two_stage_varmodel,
    EvaluatedPoint,
};
use crate::subproblem;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("starting point has dimension {got}, problem has {expected}")]
    StartDimension { expected: usize, got: usize },
    #[error("the run has already terminated")]
    Terminated,
}

impl SolverError {
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, SolverError::Oracle(OracleError::BudgetExhausted { .. }))
    }
}

/// One line of the run log, written after the starting point is evaluated
/// and after every completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    /// Cumulative `c_n·Q_n + c_s·W_s` at the end of the iteration.
    pub cost: f64,
    pub communications: u64,
    pub shots: u64,
    pub incumbent: DVector<f64>,
    pub estimate: f64,
    pub samples: u64,
    pub delta: f64,
    /// `None` for the starting point.
    pub outcome: Option<Outcome>,
}

/// Per-operation communication counts, taken from ledger deltas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommunicationAudit {
    pub new_points: u64,
    pub reevaluations: u64,
    pub max_new_point: u64,
    pub max_reevaluation: u64,
    /// Operations over the two-stage limits (2 per new point, 1 per
    /// reevaluation). Only counted for two-stage strategies.
    pub violations: u64,
}

impl CommunicationAudit {
    fn record(&mut self, new_point: bool, comms: u64, two_stage: bool) {
        if new_point {
            self.new_points += 1;
            self.max_new_point = self.max_new_point.max(comms);
            if two_stage && comms > 2 {
                self.violations += 1;
            }
        } else {
            self.reevaluations += 1;
            self.max_reevaluation = self.max_reevaluation.max(comms);
            if two_stage && comms > 1 {
                self.violations += 1;
            }
        }
    }
}

/// Design set for one iteration plus the variance-model artifacts.
#[derive(Debug, Clone)]
pub struct DesignChoice {
    pub design: DesignSet,
    pub variance_model: Option<QuadDiagModel>,
    /// Radius of the region the variance model was fit on.
    pub variance_radius: Option<f64>,
    /// History index of the low-variance point, when one was evaluated.
    pub variance_point: Option<usize>,
    /// Design index the low-variance point replaced.
    pub swapped: Option<usize>,
}

/// Outcome of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDecision {
    pub outcome: Outcome,
    pub incumbent: DVector<f64>,
    pub delta: f64,
    pub reductions: Reductions,
    /// Low-variance point proposed by the variance model, if any.
    pub variance_point: Option<DVector<f64>>,
    /// Design index it replaced.
    pub swapped: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    IterationLimit,
    /// The radius fell below the resolution at which design points are
    /// distinguishable.
    RadiusCollapsed,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Vec<TrajectoryRecord>,
    /// Incumbent with the lowest recorded estimate (the start point when
    /// nothing was affordable).
    pub best: DVector<f64>,
    pub best_estimate: Option<f64>,
    pub ledger: CostLedger,
    pub audit: CommunicationAudit,
    pub iterations: usize,
    pub stop: StopReason,
}

const MIN_RADIUS: f64 = 1e-10;

/// Inputs to the sample-size rules that depend on the iteration.
#[derive(Clone, Copy)]
struct SampleContext<'a> {
    variance_model: Option<&'a QuadDiagModel>,
    incumbent_variance: f64,
}

/// State of one run.
#[derive(Debug)]
pub struct Solver {
    config: SolverConfig,
    handle: OracleHandle,
    root: SeedStream,
    history: History,
    incumbent: usize,
    delta: f64,
    k: usize,
    visits: u64,
    trajectory: Vec<TrajectoryRecord>,
    audit: CommunicationAudit,
    terminal: bool,
}

impl Solver {
    /// Validates the configuration, applies its budget to `handle` and
    /// evaluates the starting point.
    pub fn start(
        mut handle: OracleHandle,
        x0: &DVector<f64>,
        config: SolverConfig,
        root: SeedStream,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if x0.len() != handle.dim() {
            return Err(SolverError::StartDimension {
                expected: handle.dim(),
                got: x0.len(),
            });
        }
        if config.budget.is_finite() {
            handle.set_budget(Some(config.budget));
        }
        let mut solver = Self {
            delta: config.delta0,
            config,
            handle,
            root,
            history: History::new(),
            incumbent: 0,
            k: 0,
            visits: 0,
            trajectory: Vec::new(),
            audit: CommunicationAudit::default(),
            terminal: false,
        };
        let ctx = SampleContext {
            variance_model: None,
            incumbent_variance: 0.0,
        };
        let mut fresh = HashSet::new();
        solver.incumbent = solver.evaluate_at(x0, ctx, &mut fresh)?;
        solver.record(None);
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn incumbent(&self) -> &EvaluatedPoint {
        self.history.get(self.incumbent)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn ledger(&self) -> &CostLedger {
        self.handle.ledger()
    }

    pub fn trajectory(&self) -> &[TrajectoryRecord] {
        &self.trajectory
    }

    pub fn audit(&self) -> &CommunicationAudit {
        &self.audit
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn record(&mut self, outcome: Option<Outcome>) {
        let inc = self.history.get(self.incumbent);
        let ledger = self.handle.ledger();
        self.trajectory.push(TrajectoryRecord {
            iteration: self.k,
            cost: ledger.total_cost(),
            communications: ledger.communications(),
            shots: ledger.shots(),
            incumbent: inc.x.clone(),
            estimate: inc.mean(),
            samples: inc.count(),
            delta: self.delta,
            outcome,
        });
    }

    /// Estimates `x`: new points with the configured strategy, history
    /// points by a top-up, points already touched this iteration as they
    /// are. Returns the history index.
    fn evaluate_at(
        &mut self,
        x: &DVector<f64>,
        ctx: SampleContext<'_>,
        fresh: &mut HashSet<usize>,
    ) -> Result<usize, SolverError> {
        let strategy = self.config.strategy;
        let params = self.config.sampling;
        let (delta, k) = (self.delta, self.k);
        let before = self.handle.ledger().communications();
        let (point, new_point) = match self.history.find(x) {
            Some(i) if fresh.contains(&i) => return Ok(i),
            Some(i) => {
                let prior = self.history.get(i).clone();
                let p = match strategy {
                    SamplingStrategy::Streaming => continue_streaming(&mut self.handle, prior, delta, k, &params)?,
                    _ => reevaluate(&mut self.handle, &prior, delta, k, &params)?,
                };
                (p, false)
            }
            None => {
                let stream = self.root.substream(self.visits);
                self.visits += 1;
                let h = &mut self.handle;
                let p = match (strategy, ctx.variance_model) {
                    (SamplingStrategy::Streaming, _) => streaming_adaptive(h, x, delta, k, &params, stream)?,
                    (SamplingStrategy::Lambda, _) | (SamplingStrategy::VarianceModel, None) => {
                        two_stage_lambda(h, x, delta, k, &params, stream)?
                    }
                    (SamplingStrategy::VarianceModel, Some(m)) => {
                        two_stage_varmodel(h, x, delta, k, &params, m, stream)?
                    }
                    (SamplingStrategy::Hybrid, m) => {
                        two_stage_hybrid(h, x, delta, k, &params, m, ctx.incumbent_variance, stream)?
                    }
                };
                (p, true)
            }
        };
        let comms = self.handle.ledger().communications() - before;
        self.audit.record(new_point, comms, strategy.is_two_stage());
        let i = self.history.insert(point);
        fresh.insert(i);
        Ok(i)
    }

    /// Base design set, then (after the first iteration, when enabled) a
    /// variance-model step whose result replaces the nearest eligible
    /// design point.
    fn choose_design(
        &mut self,
        incumbent_variance: f64,
        fresh: &mut HashSet<usize>,
    ) -> Result<DesignChoice, SolverError> {
        let center = self.incumbent().x.clone();
        let design = choose_design_set(&center, self.delta, self.history.locations())?;
        let mut choice = DesignChoice {
            design,
            variance_model: None,
            variance_radius: None,
            variance_point: None,
            swapped: None,
        };
        if self.k == 0 || !self.config.variance_model {
            return Ok(choice);
        }
        let Some((radius, members)) = self.variance_region(&center) else {
            return Ok(choice);
        };
        let points: Vec<DVector<f64>> = members.iter().map(|&i| self.history.get(i).x.clone()).collect();
        let variances: Vec<f64> = members.iter().map(|&i| self.history.get(i).variance()).collect();
        let model = match build_variance_model(&center, radius, &points, &variances)? {
            VarianceFit::Model(m) => m,
            VarianceFit::RankDeficient { .. } => return Ok(choice),
        };
        choice.variance_radius = Some(radius);
        let step = subproblem::solve(&model, self.delta);
        if step.step.norm() > POINT_TOLERANCE {
            let target = &center + &step.step;
            let ctx = SampleContext {
                variance_model: Some(&model),
                incumbent_variance,
            };
            let idx = self.evaluate_at(&target, ctx, fresh)?;
            choice.variance_point = Some(idx);
            choice.swapped = swap_into(&mut choice.design, &target);
        }
        choice.variance_model = Some(model);
        Ok(choice)
    }

    /// Smallest `Δ_k·w^j` containing at least `2d + 1` history points that
    /// carry a sample variance, with the indices of those points.
    fn variance_region(&self, center: &DVector<f64>) -> Option<(f64, Vec<usize>)> {
        let need = 2 * center.len() + 1;
        let mut dists: Vec<(f64, usize)> = self
            .history
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.stats.has_variance())
            .map(|(i, p)| ((&p.x - center).norm(), i))
            .collect();
        if dists.len() < need {
            return None;
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        let radius = expanded_radius(self.delta, self.config.w, dists[need - 1].0);
        let members = dists.iter().take_while(|(d, _)| *d <= radius).map(|(_, i)| *i).collect();
        Some((radius, members))
    }

    /// Runs one full iteration.
    pub fn iterate(&mut self) -> Result<IterationDecision, SolverError> {
        if self.terminal {
            return Err(SolverError::Terminated);
        }
        let result = self.iterate_inner();
        if result.is_err() {
            self.terminal = true;
        }
        result
    }

    fn iterate_inner(&mut self) -> Result<IterationDecision, SolverError> {
        let mut fresh = HashSet::new();
        let incumbent_variance = self.incumbent().variance();
        let choice = self.choose_design(incumbent_variance, &mut fresh)?;
        let ctx = SampleContext {
            variance_model: choice.variance_model.as_ref(),
            incumbent_variance,
        };
        let design = &choice.design;
        let center = design.center.clone();

        let mut indices = Vec::with_capacity(design.len());
        for p in &design.points {
            indices.push(self.evaluate_at(p, ctx, &mut fresh)?);
        }
        self.incumbent = indices[0];
        let means: Vec<f64> = indices.iter().map(|&i| self.history.get(i).mean()).collect();
        let f_k = means[0];

        let model = match build_interpolation(design, &means) {
            Ok(m) => m,
            Err(ModelError::Singular { .. }) => return Ok(self.finish_unsuccessful(&choice)),
            Err(e) => return Err(e.into()),
        };
        let step = subproblem::solve(&model, self.delta);
        let (candidate_gain, candidate) = if step.step.norm() > POINT_TOLERANCE {
            let x = step.candidate(&center);
            let i = self.evaluate_at(&x, ctx, &mut fresh)?;
            (f_k - self.history.get(i).mean(), Some(i))
        } else {
            (0.0, None)
        };
        let (best_design, best_mean) = indices[1..]
            .iter()
            .zip(&means[1..])
            .fold((indices[0], f64::INFINITY), |acc, (&i, &m)| if m < acc.1 { (i, m) } else { acc });
        let reductions = Reductions {
            predicted: step.predicted_reduction,
            candidate: candidate_gain,
            design: f_k - best_mean,
            gradient_norm: model.gradient.norm(),
        };
        let decision = update_rule(&reductions, self.delta, &self.config);
        self.incumbent = match decision.outcome {
            Outcome::DirectSearch => best_design,
            Outcome::VerySuccessful | Outcome::Successful => candidate.unwrap_or(self.incumbent),
            Outcome::Unsuccessful => self.incumbent,
        };
        self.delta = decision.delta;
        self.k += 1;
        self.record(Some(decision.outcome));
        if self.delta < MIN_RADIUS {
            self.terminal = true;
        }
        Ok(IterationDecision {
            outcome: decision.outcome,
            incumbent: self.incumbent().x.clone(),
            delta: self.delta,
            reductions,
            variance_point: choice.variance_point.map(|i| self.history.get(i).x.clone()),
            swapped: choice.swapped,
        })
    }

    fn finish_unsuccessful(&mut self, choice: &DesignChoice) -> IterationDecision {
        self.delta *= self.config.gamma2;
        self.k += 1;
        self.record(Some(Outcome::Unsuccessful));
        if self.delta < MIN_RADIUS {
            self.terminal = true;
        }
        IterationDecision {
            outcome: Outcome::Unsuccessful,
            incumbent: self.incumbent().x.clone(),
            delta: self.delta,
            reductions: Reductions {
                predicted: 0.0,
                candidate: 0.0,
                design: 0.0,
                gradient_norm: 0.0,
            },
            variance_point: choice.variance_point.map(|i| self.history.get(i).x.clone()),
            swapped: choice.swapped,
        }
    }

    /// Computes this iteration's design set, including the variance-model
    /// step, without running the rest of the iteration.
    pub fn vmi_choose_design_set(&mut self) -> Result<DesignChoice, SolverError> {
        let mut fresh = HashSet::new();
        let v = self.incumbent().variance();
        self.choose_design(v, &mut fresh)
    }

    fn best(&self) -> Option<&TrajectoryRecord> {
        self.trajectory
            .iter()
            .fold(None, |best: Option<&TrajectoryRecord>, r| match best {
                Some(b) if b.estimate <= r.estimate => Some(b),
                _ => Some(r),
            })
    }

    fn into_result(self, x0: &DVector<f64>, stop: StopReason) -> RunResult {
        let best = self.best();
        RunResult {
            best: best.map_or_else(|| x0.clone(), |r| r.incumbent.clone()),
            best_estimate: best.map(|r| r.estimate),
            ledger: self.handle.ledger().clone(),
            audit: self.audit,
            iterations: self.k,
            stop,
            trajectory: self.trajectory,
        }
    }
}

/// `Δ·w^j` for the smallest `j ≥ 0` reaching `needed`.
pub fn expanded_radius(delta: f64, w: f64, needed: f64) -> f64 {
    let mut radius = delta;
    while radius < needed {
        radius *= w;
    }
    radius
}

/// Replaces the design point nearest to `x`, except that the center is
/// never replaced and the reused point only in a plain stencil. The swap is
/// undone if it leaves the set unpoised. Returns the replaced index.
fn swap_into(design: &mut DesignSet, x: &DVector<f64>) -> Option<usize> {
    let near = design.nearest_index(x);
    let eligible = near >= 2 || (near == 1 && design.is_stencil());
    if !eligible {
        return None;
    }
    let old = std::mem::replace(&mut design.points[near], x.clone());
    if poisedness_rcond(design) > MIN_DESIGN_RCOND {
        design.reused[near] = true;
        Some(near)
    } else {
        design.points[near] = old;
        None
    }
}

/// Runs the solver from `x0` until the budget is spent.
///
/// A budget too small for the first evaluation yields an empty trajectory
/// with `x0` as the answer.
pub fn run(
    handle: OracleHandle,
    x0: &DVector<f64>,
    config: &SolverConfig,
    root: SeedStream,
) -> Result<RunResult, SolverError> {
    config.validate()?;
    let ledger = handle.ledger().clone();
    let mut solver = match Solver::start(handle, x0, config.clone(), root) {
        Ok(s) => s,
        Err(e) if e.is_budget_exhausted() => {
            return Ok(RunResult {
                trajectory: Vec::new(),
                best: x0.clone(),
                best_estimate: None,
                ledger,
                audit: CommunicationAudit::default(),
                iterations: 0,
                stop: StopReason::Budget,
            })
        }
        Err(e) => return Err(e),
    };
    loop {
        if config.max_iterations.is_some_and(|m| solver.k >= m) {
            return Ok(solver.into_result(x0, StopReason::IterationLimit));
        }
        match solver.iterate() {
            Ok(_) if solver.terminal => return Ok(solver.into_result(x0, StopReason::RadiusCollapsed)),
            Ok(_) => {}
            Err(e) if e.is_budget_exhausted() => return Ok(solver.into_result(x0, StopReason::Budget)),
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{RunningStats, StochasticOracle};
    use crate::sampling::LambdaSchedule;
    use std::sync::Arc;

    struct Sphere;

    impl StochasticOracle for Sphere {
        fn name(&self) -> &str {
            "sphere"
        }
        fn dim(&self) -> usize {
            2
        }
        fn draw(&self, x: &[f64], n: u64, stream: &mut SeedStream) -> RunningStats {
            let f: f64 = x.iter().map(|v| v * v).sum();
            stream.for_each_draw(n, |_| {});
            RunningStats::from_parts(n, f, 0.0)
        }
    }

    fn sphere(budget: f64) -> (OracleHandle, SolverConfig) {
        let handle = OracleHandle::new(Arc::new(Sphere), CostLedger::new(0.0, 1.0));
        (handle, SolverConfig::default().with_budget(budget))
    }

    #[test]
    fn expansion_counts_rings() {
        assert_eq!(expanded_radius(1.0, 2.0, 3.0), 4.0);
        assert_eq!(expanded_radius(1.0, 2.0, 0.5), 1.0);
        assert_eq!(expanded_radius(1.0, 2.0, 1.0), 1.0);
    }

    #[test]
    fn zero_budget_returns_start() {
        let (h, c) = sphere(0.0);
        let x0 = DVector::from_vec(vec![5.0, 5.0]);
        let r = run(h, &x0, &c, SeedStream::new(0, 0)).unwrap();
        assert!(r.trajectory.is_empty());
        assert_eq!(r.best, x0);
    }

    #[test]
    fn first_iteration_on_exact_quadratic_succeeds() {
        let (h, c) = sphere(f64::INFINITY);
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let mut s = Solver::start(h, &x0, c, SeedStream::new(0, 0)).unwrap();
        let d = s.iterate().unwrap();
        assert!(matches!(d.outcome, Outcome::VerySuccessful | Outcome::Successful));
        // Exact model: the step points to the origin and is clipped at Δ = 1.
        let expected = 1.0 - 1.0 / 2f64.sqrt();
        assert!((d.incumbent[0] - expected).abs() < 1e-9, "{}", d.incumbent);
        assert!((d.reductions.predicted - (2.0 - 2.0 * expected * expected)).abs() < 1e-9);
    }

    #[test]
    fn sphere_converges() {
        let (h, mut c) = sphere(1e4);
        c.sampling.lambda = LambdaSchedule::Constant(2);
        let r = run(h, &DVector::from_vec(vec![5.0, 5.0]), &c, SeedStream::new(0, 0)).unwrap();
        assert!(r.best.norm() < 1e-2, "{}", r.best);
        assert!(r.ledger.total_cost() <= 1e4);
    }

    #[test]
    fn variance_region_example() {
        let (h, c) = sphere(f64::INFINITY);
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        let mut s = Solver::start(h, &x0, c, SeedStream::new(0, 0)).unwrap();
        for d in [0.5, 1.5, 1.8, 3.0, 10.0] {
            let p = EvaluatedPoint {
                x: DVector::from_vec(vec![d, 0.0]),
                stats: RunningStats::from_parts(4, 0.0, 0.0),
                ..s.incumbent().clone()
            };
            s.history.insert(p);
        }
        let (radius, members) = s.variance_region(&x0).unwrap();
        assert_eq!(radius, 4.0);
        assert_eq!(members.len(), 5);
    }

    #[test]
    fn swap_skips_center_and_reused_point() {
        let center = DVector::from_vec(vec![0.0, 0.0]);
        let hist = [DVector::from_vec(vec![0.6, 0.0])];
        let mut design = choose_design_set(&center, 1.0, hist.iter()).unwrap();
        assert!(!design.is_stencil());
        assert_eq!(swap_into(&mut design, &DVector::from_vec(vec![0.01, 0.0])), None);
        assert_eq!(swap_into(&mut design, &DVector::from_vec(vec![0.55, 0.0])), None);
        let far = DVector::from_vec(vec![-0.9, 0.0]);
        let replaced = swap_into(&mut design, &far).unwrap();
        assert!(replaced >= 2);
        assert_eq!(design.points[replaced], far);

        let mut stencil = choose_design_set(&center, 1.0, std::iter::empty()).unwrap();
        assert_eq!(swap_into(&mut stencil, &DVector::from_vec(vec![0.9, 0.0])), Some(1));
    }
}

//! Sample-size selection.
//!
//! Two families of rules decide how many shots a design point receives:
//!
//! * the *streaming* adaptive rule keeps asking the oracle for another batch
//!   until `σ̂(x,n)/√n ≤ κΔ²/√λ_k` holds, one communication per batch;
//! * the *two-stage* rules spend at most two communications on a new point:
//!   a first batch sized either by `λ_k` or by the variance model's
//!   prediction, and one top-up sized from the first-stage variance
//!   estimate.
//!
//! Points seen before are topped up with at most one communication via
//! [`reevaluate`].

use nalgebra::DVector;

use crate::models::QuadDiagModel;
use crate::oracle::{OracleError, OracleHandle, RunningStats, SeedStream};

/// Minimum sample size schedule `k ↦ λ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    /// `⌈scale · ln(k + 10)^exponent⌉`.
    Logarithmic { scale: f64, exponent: f64 },
    Constant(u64),
}

impl LambdaSchedule {
    pub fn at(&self, k: usize) -> u64 {
        let raw = match *self {
            LambdaSchedule::Logarithmic { scale, exponent } => {
                ceil_count(scale * ((k as f64) + 10.0).ln().powf(exponent))
            }
            LambdaSchedule::Constant(n) => n,
        };
        raw.max(2)
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Logarithmic {
            scale: 4.0,
            exponent: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    /// Adaptive sampling constant κ.
    pub kappa: f64,
    pub lambda: LambdaSchedule,
    /// Slack per unit radius in the hybrid trust test for the variance model.
    pub c_v: f64,
    /// Hard cap on the sample size of a single point.
    pub n_max: u64,
    /// Streaming increment; `None` uses `λ_k`.
    pub batch: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            lambda: LambdaSchedule::default(),
            c_v: 1.0,
            n_max: 100_000,
            batch: None,
        }
    }
}

impl SamplingParams {
    pub fn lambda_at(&self, k: usize) -> u64 {
        self.lambda.at(k).min(self.n_max.max(2))
    }
}

/// Which rule produced a point's latest sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingPath {
    Streaming,
    Lambda,
    VarianceModel,
    Reevaluation,
}

/// Bookkeeping for the latest sampling decision at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePlan {
    pub path: SamplingPath,
    /// Shots requested in the first communication (0 for a reevaluation).
    pub first_stage: u64,
    /// Sample variance seen after the first stage (or the prior variance).
    pub first_stage_variance: f64,
    /// Final sample size target before capping.
    pub target: u64,
}

/// A design point with its running statistics and private random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedPoint {
    pub x: DVector<f64>,
    pub stats: RunningStats,
    pub stream: SeedStream,
    /// The per-point cap `N_max` stopped the sample size rule.
    pub capped: bool,
    pub plan: SamplePlan,
}

impl EvaluatedPoint {
    pub fn mean(&self) -> f64 {
        self.stats.mean()
    }

    pub fn variance(&self) -> f64 {
        self.stats.variance()
    }

    pub fn count(&self) -> u64 {
        self.stats.count()
    }
}

/// Rounds a nonnegative real sample size up, ignoring float noise just above
/// an integer.
pub fn ceil_count(x: f64) -> u64 {
    if !x.is_finite() {
        return u64::MAX;
    }
    if x <= 0.0 {
        return 0;
    }
    let c = x.ceil();
    if c - x > 1.0 - 1e-9 * c.max(1.0) {
        (c - 1.0) as u64
    } else {
        c as u64
    }
}

fn inflation(variance: f64, kappa: f64, delta: f64) -> f64 {
    variance.max(0.0) / (kappa * delta.powi(4))
}

/// `⌈λ_k · max{1, v/(κΔ⁴)}⌉`, saturating.
fn two_stage_size(lambda: u64, variance: f64, kappa: f64, delta: f64) -> u64 {
    ceil_count(lambda as f64 * inflation(variance, kappa, delta).max(1.0))
}

fn top_up(
    oracle: &mut OracleHandle,
    point: &mut EvaluatedPoint,
    target: u64,
) -> Result<(), OracleError> {
    if target > point.stats.count() {
        let extra = target - point.stats.count();
        let x = point.x.clone();
        let more = oracle.sample(x.as_slice(), extra, &mut point.stream)?;
        point.stats = point.stats.merge(&more);
    }
    Ok(())
}

fn first_stage(
    oracle: &mut OracleHandle,
    x: &DVector<f64>,
    n: u64,
    mut stream: SeedStream,
    plan: SamplePlan,
) -> Result<EvaluatedPoint, OracleError> {
    let stats = oracle.sample(x.as_slice(), n, &mut stream)?;
    Ok(EvaluatedPoint {
        x: x.clone(),
        stats,
        stream,
        capped: false,
        plan,
    })
}

fn streaming_satisfied(stats: &RunningStats, lambda: u64, kappa: f64, delta: f64) -> bool {
    // σ̂/√n ≤ κΔ²/√λ  ⇔  σ̂²·λ ≤ κ²Δ⁴·n
    stats.variance() * lambda as f64 <= kappa * kappa * delta.powi(4) * stats.count() as f64
}

/// Streaming adaptive sampling: `λ_k` shots, then batches until the
/// stopping condition holds or `N_max` is reached. Each batch is one
/// communication.
pub fn streaming_adaptive(
    oracle: &mut OracleHandle,
    x: &DVector<f64>,
    delta: f64,
    k: usize,
    params: &SamplingParams,
    stream: SeedStream,
) -> Result<EvaluatedPoint, OracleError> {
    let lambda = params.lambda_at(k);
    let plan = SamplePlan {
        path: SamplingPath::Streaming,
        first_stage: lambda,
        first_stage_variance: 0.0,
        target: lambda,
    };
    let mut point = first_stage(oracle, x, lambda, stream, plan)?;
    point.plan.first_stage_variance = point.variance();
    continue_streaming(oracle, point, delta, k, params)
}

/// Resumes the streaming rule from a point's existing statistics.
pub fn continue_streaming(
    oracle: &mut OracleHandle,
    mut point: EvaluatedPoint,
    delta: f64,
    k: usize,
    params: &SamplingParams,
) -> Result<EvaluatedPoint, OracleError> {
    let lambda = params.lambda_at(k);
    let batch = params.batch.unwrap_or(lambda).max(1);
    if point.count() < lambda {
        top_up(oracle, &mut point, lambda)?;
    }
    point.capped = false;
    while !streaming_satisfied(&point.stats, lambda, params.kappa, delta) {
        if point.count() >= params.n_max {
            point.capped = true;
            break;
        }
        let target = (point.count() + batch).min(params.n_max);
        top_up(oracle, &mut point, target)?;
    }
    point.plan.path = SamplingPath::Streaming;
    point.plan.target = point.count();
    Ok(point)
}

/// Two-stage estimation with a first stage of `λ_k` shots.
pub fn two_stage_lambda(
    oracle: &mut OracleHandle,
    x: &DVector<f64>,
    delta: f64,
    k: usize,
    params: &SamplingParams,
    stream: SeedStream,
) -> Result<EvaluatedPoint, OracleError> {
    let lambda = params.lambda_at(k);
    let plan = SamplePlan {
        path: SamplingPath::Lambda,
        first_stage: lambda,
        first_stage_variance: 0.0,
        target: lambda,
    };
    let mut point = first_stage(oracle, x, lambda, stream, plan)?;
    let var1 = point.variance();
    let target = two_stage_size(lambda, var1, params.kappa, delta);
    point.plan.first_stage_variance = var1;
    point.plan.target = target;
    point.capped = target > params.n_max;
    top_up(oracle, &mut point, target.min(params.n_max))?;
    Ok(point)
}

/// Two-stage estimation with a first stage sized by the variance model.
pub fn two_stage_varmodel(
    oracle: &mut OracleHandle,
    x: &DVector<f64>,
    delta: f64,
    k: usize,
    params: &SamplingParams,
    varmodel: &QuadDiagModel,
    stream: SeedStream,
) -> Result<EvaluatedPoint, OracleError> {
    let lambda = params.lambda_at(k);
    let predicted = varmodel.predict_variance(x);
    let n1_raw = two_stage_size(lambda, predicted, params.kappa, delta);
    let n1 = n1_raw.min(params.n_max);
    let plan = SamplePlan {
        path: SamplingPath::VarianceModel,
        first_stage: n1,
        first_stage_variance: 0.0,
        target: n1,
    };
    let mut point = first_stage(oracle, x, n1, stream, plan)?;
    let var1 = point.variance();
    let second = ceil_count(lambda as f64 * inflation(var1, params.kappa, delta));
    let target = n1.max(second);
    point.plan.first_stage_variance = var1;
    point.plan.target = target;
    point.capped = n1_raw > params.n_max || target > params.n_max;
    top_up(oracle, &mut point, target.min(params.n_max))?;
    Ok(point)
}

/// Whether the hybrid rule distrusts the variance model at `x`:
/// `M_v(x) ≥ σ̂²(X_k) + c_v·Δ`.
pub fn hybrid_prefers_lambda(
    varmodel: &QuadDiagModel,
    x: &DVector<f64>,
    incumbent_variance: f64,
    c_v: f64,
    delta: f64,
) -> bool {
    varmodel.predict_variance(x) >= incumbent_variance + c_v * delta
}

/// Hybrid two-stage estimation: uses the variance model unless its
/// prediction exceeds the incumbent's variance by more than `c_v·Δ`, in
/// which case the `λ_k` first stage is used. Without a model the `λ_k` path
/// is taken.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_hybrid(
    oracle: &mut OracleHandle,
    x: &DVector<f64>,
    delta: f64,
    k: usize,
    params: &SamplingParams,
    varmodel: Option<&QuadDiagModel>,
    incumbent_variance: f64,
    stream: SeedStream,
) -> Result<EvaluatedPoint, OracleError> {
    match varmodel {
        Some(model) if !hybrid_prefers_lambda(model, x, incumbent_variance, params.c_v, delta) => {
            two_stage_varmodel(oracle, x, delta, k, params, model, stream)
        }
        _ => two_stage_lambda(oracle, x, delta, k, params, stream),
    }
}

/// Tops up a previously evaluated point to
/// `max{N_prev, λ_k, ⌈λ_k σ̂²/(κΔ⁴)⌉}` (capped), using at most one
/// communication.
pub fn reevaluate(
    oracle: &mut OracleHandle,
    prior: &EvaluatedPoint,
    delta: f64,
    k: usize,
    params: &SamplingParams,
) -> Result<EvaluatedPoint, OracleError> {
    let lambda = params.lambda_at(k);
    let var = prior.variance();
    let scaled = ceil_count(lambda as f64 * inflation(var, params.kappa, delta));
    let target = prior.count().max(lambda).max(scaled);
    let mut point = prior.clone();
    point.plan = SamplePlan {
        path: SamplingPath::Reevaluation,
        first_stage: 0,
        first_stage_variance: var,
        target,
    };
    point.capped = target > params.n_max;
    top_up(oracle, &mut point, target.min(params.n_max))?;
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::oracle::{CostLedger, StochasticOracle};
    use std::sync::Arc;

    /// Every request returns statistics with exactly the configured sample
    /// variance and mean zero.
    struct FixedVariance(f64);

    impl StochasticOracle for FixedVariance {
        fn name(&self) -> &str {
            "fixed-variance"
        }
        fn dim(&self) -> usize {
            1
        }
        fn draw(&self, _x: &[f64], n: u64, stream: &mut SeedStream) -> RunningStats {
            stream.for_each_draw(n, |_| {});
            RunningStats::from_parts(n, 0.0, self.0 * (n.saturating_sub(1)) as f64)
        }
    }

    fn handle(var: f64) -> OracleHandle {
        OracleHandle::new(Arc::new(FixedVariance(var)), CostLedger::new(1.0, 0.0))
    }

    fn params(lambda: u64) -> SamplingParams {
        SamplingParams {
            lambda: LambdaSchedule::Constant(lambda),
            ..SamplingParams::default()
        }
    }

    fn constant_model(value: f64) -> QuadDiagModel {
        QuadDiagModel::new(
            ModelKind::Variance,
            DVector::zeros(1),
            1.0,
            value,
            DVector::zeros(1),
            DVector::zeros(1),
        )
    }

    fn x0() -> DVector<f64> {
        DVector::zeros(1)
    }

    #[test]
    fn default_lambda_schedule_grows_slowly() {
        let s = LambdaSchedule::default();
        assert_eq!(s.at(0), 11);
        assert!(s.at(100) >= s.at(10));
        assert!(s.at(1000) < 40);
    }

    #[test]
    fn ceil_count_ignores_float_noise() {
        assert_eq!(ceil_count(40.0), 40);
        assert_eq!(ceil_count(40.000000000001), 40);
        assert_eq!(ceil_count(40.2), 41);
        assert_eq!(ceil_count(0.0), 0);
    }

    #[test]
    fn streaming_stops_when_condition_holds_exactly() {
        let mut h = handle(1.0);
        let p = streaming_adaptive(&mut h, &x0(), 1.0, 0, &params(2), SeedStream::new(0, 0)).unwrap();
        assert_eq!(p.count(), 2);
        assert_eq!(h.ledger().communications(), 1);
    }

    #[test]
    fn streaming_respects_cap() {
        let mut h = handle(1.0);
        let mut sp = params(2);
        sp.n_max = 20;
        let p = streaming_adaptive(&mut h, &x0(), 0.1, 0, &sp, SeedStream::new(0, 0)).unwrap();
        assert_eq!(p.count(), 20);
        assert!(p.capped);
    }

    #[test]
    fn lambda_two_stage_tops_up() {
        let mut h = handle(4.0);
        let p = two_stage_lambda(&mut h, &x0(), 1.0, 0, &params(10), SeedStream::new(0, 0)).unwrap();
        assert_eq!(p.plan.target, 40);
        assert_eq!(p.count(), 40);
        assert_eq!(h.ledger().communications(), 2);
        assert_eq!(h.ledger().shots(), 40);
    }

    #[test]
    fn lambda_two_stage_zero_variance_single_call() {
        let mut h = handle(0.0);
        let p = two_stage_lambda(&mut h, &x0(), 1.0, 0, &params(10), SeedStream::new(0, 0)).unwrap();
        assert_eq!(p.count(), 10);
        assert_eq!(h.ledger().communications(), 1);
    }

    #[test]
    fn lambda_two_stage_small_radius() {
        let mut h = handle(4.0);
        let p = two_stage_lambda(&mut h, &x0(), 0.5, 0, &params(10), SeedStream::new(0, 0)).unwrap();
        assert_eq!(p.count(), 640);
    }

    #[test]
    fn varmodel_first_stage_is_enough() {
        let mut h = handle(3.5);
        let p = two_stage_varmodel(
            &mut h,
            &x0(),
            1.0,
            0,
            &params(10),
            &constant_model(4.0),
            SeedStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(p.plan.first_stage, 40);
        assert_eq!(p.count(), 40);
        assert_eq!(h.ledger().communications(), 1);
    }

    #[test]
    fn varmodel_negative_prediction_clamps_to_lambda() {
        let mut h = handle(0.0);
        let p = two_stage_varmodel(
            &mut h,
            &x0(),
            1.0,
            0,
            &params(10),
            &constant_model(-3.0),
            SeedStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(p.plan.first_stage, 10);
        assert_eq!(p.count(), 10);
    }

    #[test]
    fn varmodel_second_stage_from_estimate() {
        let mut h = handle(9.0);
        let p = two_stage_varmodel(
            &mut h,
            &x0(),
            1.0,
            0,
            &params(10),
            &constant_model(1.0),
            SeedStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(p.plan.first_stage, 10);
        assert_eq!(p.count(), 90);
        assert_eq!(h.ledger().shots(), 90);
        assert_eq!(h.ledger().communications(), 2);
    }

    #[test]
    fn hybrid_gate() {
        let x = x0();
        assert!(hybrid_prefers_lambda(&constant_model(10.0), &x, 1.0, 1.0, 2.0));
        assert!(!hybrid_prefers_lambda(&constant_model(2.9), &x, 1.0, 1.0, 2.0));

        let mut sp = params(10);
        sp.c_v = 1.0;
        let mut h = handle(1.0);
        let p = two_stage_hybrid(&mut h, &x, 2.0, 0, &sp, Some(&constant_model(10.0)), 1.0, SeedStream::new(0, 0))
            .unwrap();
        assert_eq!(p.plan.path, SamplingPath::Lambda);
        let p = two_stage_hybrid(&mut h, &x, 2.0, 0, &sp, Some(&constant_model(2.9)), 1.0, SeedStream::new(0, 1))
            .unwrap();
        assert_eq!(p.plan.path, SamplingPath::VarianceModel);
        let p = two_stage_hybrid(&mut h, &x, 2.0, 0, &sp, None, 1.0, SeedStream::new(0, 2)).unwrap();
        assert_eq!(p.plan.path, SamplingPath::Lambda);
    }

    fn prior(n: u64, var: f64) -> EvaluatedPoint {
        EvaluatedPoint {
            x: x0(),
            stats: RunningStats::from_parts(n, 0.0, var * (n - 1) as f64),
            stream: SeedStream::new(0, 0),
            capped: false,
            plan: SamplePlan {
                path: SamplingPath::Lambda,
                first_stage: n,
                first_stage_variance: var,
                target: n,
            },
        }
    }

    #[test]
    fn reevaluation_examples() {
        let mut h = handle(1.0);
        let p = reevaluate(&mut h, &prior(100, 1.0), 1.0, 0, &params(10)).unwrap();
        assert_eq!(p.count(), 100);
        assert_eq!(h.ledger().communications(), 0);

        let p = reevaluate(&mut h, &prior(10, 8.0), 0.5, 0, &params(10)).unwrap();
        assert_eq!(p.count(), 1280);
        assert_eq!(h.ledger().shots(), 1270);
        assert_eq!(h.ledger().communications(), 1);

        let p = reevaluate(&mut h, &prior(10, 0.0), 1.0, 0, &params(20)).unwrap();
        assert_eq!(p.count(), 20);
    }
}

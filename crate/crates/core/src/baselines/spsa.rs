use nalgebra::DVector;
use rand::Rng;

use super::Tracker;
use crate::oracle::{OracleError, OracleHandle, SeedStream};
use crate::solver::{RunResult, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    /// Stability offset in the step-size denominator.
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Shots per perturbed evaluation (one communication each).
    pub shots: u64,
    pub budget: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            c: 0.15,
            big_a: 10.0,
            alpha: 0.602,
            gamma: 0.101,
            shots: 10,
            budget: f64::INFINITY,
            max_iterations: None,
        }
    }
}

/// Index of the perturbation substream, far from the evaluation substreams.
const PERTURBATION_STREAM: u64 = 1 << 48;

/// Rademacher vector of length `d`.
pub(crate) fn rademacher(d: usize, stream: &mut SeedStream) -> DVector<f64> {
    let mut v = Vec::with_capacity(d);
    stream.for_each_draw(d as u64, |rng| v.push(if rng.random::<bool>() { 1.0 } else { -1.0 }));
    DVector::from_vec(v)
}

/// SPSA: `x ← x − a_k ĝ_k` with `ĝ_k = (F̄(x + c_kδ) − F̄(x − c_kδ)) / (2c_k) · δ`.
///
/// Each iteration logs `x_k` with the estimate `(F̄₊ + F̄₋)/2`.
pub fn run_spsa(handle: OracleHandle, x0: &DVector<f64>, config: &SpsaConfig, root: SeedStream) -> RunResult {
    assert!(config.a > 0.0 && config.c > 0.0, "SPSA gains must be positive");
    let mut t = Tracker::new(handle, config.budget, root);
    let mut k = 0;
    let stop = match spsa_loop(&mut t, x0, config, &mut k) {
        Ok(stop) => stop,
        Err(_) => StopReason::Budget,
    };
    t.finish(x0, k, stop)
}

fn spsa_loop(
    t: &mut Tracker,
    x0: &DVector<f64>,
    config: &SpsaConfig,
    k: &mut usize,
) -> Result<StopReason, OracleError> {
    let mut perturb = t.root.substream(PERTURBATION_STREAM);
    let mut x = x0.clone();
    loop {
        if config.max_iterations.is_some_and(|m| *k >= m) {
            return Ok(StopReason::IterationLimit);
        }
        let kf = *k as f64;
        let ak = config.a / (kf + 1.0 + config.big_a).powf(config.alpha);
        let ck = config.c / (kf + 1.0).powf(config.gamma);
        let delta = rademacher(x.len(), &mut perturb);
        let plus = t.estimate(&(&x + &delta * ck), config.shots)?;
        let minus = t.estimate(&(&x - &delta * ck), config.shots)?;
        t.record(*k, &x, 0.5 * (plus + minus), 2 * config.shots, ck);
        let g = &delta * ((plus - minus) / (2.0 * ck));
        x -= g * ak;
        *k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CostLedger, RunningStats, StochasticOracle};
    use std::sync::Arc;

    struct Sphere;

    impl StochasticOracle for Sphere {
        fn name(&self) -> &str {
            "sphere"
        }
        fn dim(&self) -> usize {
            3
        }
        fn draw(&self, x: &[f64], n: u64, _: &mut SeedStream) -> RunningStats {
            RunningStats::from_parts(n, x.iter().map(|v| v * v).sum(), 0.0)
        }
    }

    #[test]
    fn deterministic_sphere_decreases_monotonically() {
        let config = SpsaConfig {
            a: 0.5,
            big_a: 10.0,
            c: 0.1,
            max_iterations: Some(100),
            ..SpsaConfig::default()
        };
        let handle = OracleHandle::new(Arc::new(Sphere), CostLedger::new(1.0, 0.0));
        let r = run_spsa(handle, &DVector::from_vec(vec![1.0, -2.0, 0.5]), &config, SeedStream::new(3, 0));
        assert_eq!(r.ledger.communications(), 200);
        let f: Vec<f64> = r.trajectory.iter().map(|t| t.incumbent.norm_squared()).collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0]), "{f:?}");
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let mut s = SeedStream::new(0, 0);
        let v = rademacher(1000, &mut s);
        assert!(v.iter().all(|x| *x == 1.0 || *x == -1.0));
        assert!(v.iter().any(|x| *x == 1.0) && v.iter().any(|x| *x == -1.0));
    }
}

use nalgebra::DVector;

use super::Tracker;
use crate::oracle::{OracleError, OracleHandle, SeedStream};
use crate::solver::{RunResult, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    /// Shots per vertex evaluation (one communication each).
    pub shots: u64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial right-angled simplex.
    pub initial_step: f64,
    pub budget: f64,
    pub max_iterations: Option<usize>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            shots: 30,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 1.0,
            budget: f64::INFINITY,
            max_iterations: None,
        }
    }
}

struct Vertex {
    x: DVector<f64>,
    f: f64,
}

fn sort(simplex: &mut [Vertex]) {
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
}

/// Nelder–Mead on `shots`-sample means. Stops when the budget cannot pay
/// for the next vertex; if the initial simplex is unaffordable the result
/// is `x0` with an empty trajectory.
pub fn run_nelder_mead(
    handle: OracleHandle,
    x0: &DVector<f64>,
    config: &NelderMeadConfig,
    root: SeedStream,
) -> RunResult {
    assert!(config.shots >= 2, "Nelder-Mead needs at least two shots per vertex");
    let mut t = Tracker::new(handle, config.budget, root);
    match simplex_loop(&mut t, x0, config) {
        Ok((k, stop)) => t.finish(x0, k, stop),
        Err(_) => {
            let k = t.trajectory.last().map_or(0, |r| r.iteration);
            t.finish(x0, k, StopReason::Budget)
        }
    }
}

fn simplex_loop(
    t: &mut Tracker,
    x0: &DVector<f64>,
    config: &NelderMeadConfig,
) -> Result<(usize, StopReason), OracleError> {
    let d = x0.len();
    let r = config.shots;
    if !t.handle.can_afford((d as u64 + 1) * r) || !affordable_in_calls(t, d + 1, r) {
        return Err(OracleError::BudgetExhausted {
            requested: t.handle.ledger().cost_after(r),
            budget: config.budget,
        });
    }
    let mut simplex = Vec::with_capacity(d + 1);
    simplex.push(Vertex {
        x: x0.clone(),
        f: t.estimate(x0, r)?,
    });
    for i in 0..d {
        let mut x = x0.clone();
        x[i] += config.initial_step;
        let f = t.estimate(&x, r)?;
        simplex.push(Vertex { x, f });
    }
    sort(&mut simplex);
    t.record(0, &simplex[0].x, simplex[0].f, r, diameter(&simplex));

    let mut k = 0;
    loop {
        if config.max_iterations.is_some_and(|m| k >= m) {
            return Ok((k, StopReason::IterationLimit));
        }
        let worst = d;
        let centroid = simplex[..d].iter().fold(DVector::zeros(d), |acc, v| acc + &v.x) / d as f64;
        let toward = |coef: f64| &centroid + (&centroid - &simplex[worst].x) * coef;

        let xr = toward(config.reflection);
        let fr = t.estimate(&xr, r)?;
        if fr < simplex[0].f {
            let xe = toward(config.reflection * config.expansion);
            let fe = t.estimate(&xe, r)?;
            simplex[worst] = if fe < fr { Vertex { x: xe, f: fe } } else { Vertex { x: xr, f: fr } };
        } else if fr < simplex[d - 1].f {
            simplex[worst] = Vertex { x: xr, f: fr };
        } else {
            let outside = fr < simplex[worst].f;
            let xc = if outside {
                toward(config.reflection * config.contraction)
            } else {
                toward(-config.contraction)
            };
            let fc = t.estimate(&xc, r)?;
            let limit = if outside { fr } else { simplex[worst].f };
            if fc < limit {
                simplex[worst] = Vertex { x: xc, f: fc };
            } else {
                let best = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = &best + (&v.x - &best) * config.shrink;
                    let f = t.estimate(&x, r)?;
                    *v = Vertex { x, f };
                }
            }
        }
        sort(&mut simplex);
        k += 1;
        t.record(k, &simplex[0].x, simplex[0].f, r, diameter(&simplex));
    }
}

fn affordable_in_calls(t: &Tracker, calls: usize, shots: u64) -> bool {
    match t.handle.budget() {
        Some(b) => {
            let l = t.handle.ledger();
            let extra = calls as f64 * (l.comm_cost() + l.shot_cost() * shots as f64);
            l.total_cost() + extra <= b * (1.0 + 1e-12)
        }
        None => true,
    }
}

fn diameter(simplex: &[Vertex]) -> f64 {
    simplex
        .iter()
        .skip(1)
        .map(|v| (&v.x - &simplex[0].x).norm())
        .fold(0.0, f64::max)
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
            2
        }
        fn draw(&self, x: &[f64], n: u64, _: &mut SeedStream) -> RunningStats {
            RunningStats::from_parts(n, x.iter().map(|v| v * v).sum(), 0.0)
        }
    }

    fn handle() -> OracleHandle {
        OracleHandle::new(Arc::new(Sphere), CostLedger::new(0.0, 1.0))
    }

    #[test]
    fn converges_on_sphere() {
        let config = NelderMeadConfig {
            budget: 1e4,
            ..NelderMeadConfig::default()
        };
        let r = run_nelder_mead(handle(), &DVector::from_vec(vec![5.0, 5.0]), &config, SeedStream::new(0, 0));
        assert!(r.best.norm() < 0.1, "{}", r.best);
        assert!(r.ledger.total_cost() <= 1e4);
    }

    #[test]
    fn small_budget_returns_start() {
        let config = NelderMeadConfig {
            budget: 89.0,
            ..NelderMeadConfig::default()
        };
        let x0 = DVector::from_vec(vec![5.0, 5.0]);
        let r = run_nelder_mead(handle(), &x0, &config, SeedStream::new(0, 0));
        assert_eq!(r.best, x0);
        assert!(r.trajectory.is_empty());
        assert_eq!(r.ledger.communications(), 0);
    }

    #[test]
    fn one_call_per_vertex() {
        let config = NelderMeadConfig {
            max_iterations: Some(0),
            ..NelderMeadConfig::default()
        };
        let r = run_nelder_mead(handle(), &DVector::from_vec(vec![1.0, 1.0]), &config, SeedStream::new(0, 0));
        assert_eq!(r.ledger.communications(), 3);
        assert_eq!(r.ledger.shots(), 90);
    }
}

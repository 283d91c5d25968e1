//! Reference solvers sharing the oracle and ledger contract of the
//! trust-region method: a Nelder–Mead simplex on fixed-size sample means
//! and SPSA with Rademacher perturbations.

mod nelder_mead;
mod spsa;

pub use nelder_mead::{run_nelder_mead, NelderMeadConfig};
pub use spsa::{run_spsa, SpsaConfig};

use nalgebra::DVector;

use crate::oracle::{CostLedger, OracleError, OracleHandle, SeedStream};
use crate::solver::{CommunicationAudit, RunResult, StopReason, TrajectoryRecord};

/// Shared bookkeeping for the baselines: one communication per estimate,
/// a fresh substream per evaluation, a trajectory entry per iteration.
struct Tracker {
    handle: OracleHandle,
    root: SeedStream,
    visits: u64,
    trajectory: Vec<TrajectoryRecord>,
    start_ledger: CostLedger,
}

impl Tracker {
    fn new(mut handle: OracleHandle, budget: f64, root: SeedStream) -> Self {
        if budget.is_finite() {
            handle.set_budget(Some(budget));
        }
        let start_ledger = handle.ledger().clone();
        Self {
            handle,
            root,
            visits: 0,
            trajectory: Vec::new(),
            start_ledger,
        }
    }

    fn estimate(&mut self, x: &DVector<f64>, shots: u64) -> Result<f64, OracleError> {
        let mut stream = self.root.substream(self.visits);
        self.visits += 1;
        Ok(self.handle.sample(x.as_slice(), shots, &mut stream)?.mean())
    }

    fn record(&mut self, iteration: usize, x: &DVector<f64>, estimate: f64, samples: u64, scale: f64) {
        let ledger = self.handle.ledger();
        self.trajectory.push(TrajectoryRecord {
            iteration,
            cost: ledger.total_cost(),
            communications: ledger.communications(),
            shots: ledger.shots(),
            incumbent: x.clone(),
            estimate,
            samples,
            delta: scale,
            outcome: None,
        });
    }

    fn finish(self, x0: &DVector<f64>, iterations: usize, stop: StopReason) -> RunResult {
        let best = self
            .trajectory
            .iter()
            .fold(None, |best: Option<&TrajectoryRecord>, r| match best {
                Some(b) if b.estimate <= r.estimate => Some(b),
                _ => Some(r),
            });
        let ledger = if self.trajectory.is_empty() {
            self.start_ledger.clone()
        } else {
            self.handle.ledger().clone()
        };
        RunResult {
            best: best.map_or_else(|| x0.clone(), |r| r.incumbent.clone()),
            best_estimate: best.map(|r| r.estimate),
            ledger,
            audit: CommunicationAudit::default(),
            iterations,
            stop,
            trajectory: self.trajectory,
        }
    }
}

//! Stochastic oracle contract.
//!
//! A stochastic oracle answers a request `(x, n)` with summary statistics of
//! `n` independent draws of `F(x, ξ)`. Every request is one *communication*
//! and carries `n` *shots*; both are tallied in a [`CostLedger`] so that
//! solvers can be compared on the budget axis `c_n·Q_n + c_s·W_s`.
//!
//! Randomness comes from [`SeedStream`], a counter-based scheme: draw `i` of
//! substream `s` under base seed `b` is a pure function of `(b, s, i)`. Two
//! runs that visit the same coordinates see the same noise (common random
//! numbers) no matter how work is scheduled across threads.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors raised at the oracle boundary.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("point has a non-finite coordinate at index {index}")]
    NonFinitePoint { index: usize },
    #[error("point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("budget exhausted: request would raise cost to {requested} (budget {budget})")]
    BudgetExhausted { requested: f64, budget: f64 },
}

/// Online mean/variance accumulator (Welford), mergeable across batches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds statistics directly from their sufficient parts.
    ///
    /// `m2` is the sum of squared deviations from the mean.
    pub fn from_parts(count: u64, mean: f64, m2: f64) -> Self {
        if count == 0 {
            return Self::default();
        }
        Self {
            count,
            mean,
            m2: m2.max(0.0),
        }
    }

    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let mut stats = Self::new();
        for value in samples {
            stats.push(value);
        }
        stats
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Statistics of the concatenation of both samples (Chan et al. update).
    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        RunningStats {
            count: self.count + other.count,
            mean: self.mean + delta * (n_b / n),
            m2: self.m2 + other.m2 + delta * delta * (n_a * n_b / n),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance; `0.0` when fewer than two draws exist
    /// (check [`RunningStats::has_variance`] to tell the cases apart).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn has_variance(&self) -> bool {
        self.count >= 2
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Communication and shot counters with their unit costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostLedger {
    communications: u64,
    shots: u64,
    comm_cost: f64,
    shot_cost: f64,
}

impl CostLedger {
    pub fn new(comm_cost: f64, shot_cost: f64) -> Self {
        assert!(
            comm_cost >= 0.0 && shot_cost >= 0.0,
            "unit costs must be nonnegative"
        );
        Self {
            communications: 0,
            shots: 0,
            comm_cost,
            shot_cost,
        }
    }

    /// A ledger already holding the given counts.
    pub fn with_counts(communications: u64, shots: u64, comm_cost: f64, shot_cost: f64) -> Self {
        let mut ledger = Self::new(comm_cost, shot_cost);
        ledger.communications = communications;
        ledger.shots = shots;
        ledger
    }

    pub fn communications(&self) -> u64 {
        self.communications
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn comm_cost(&self) -> f64 {
        self.comm_cost
    }

    pub fn shot_cost(&self) -> f64 {
        self.shot_cost
    }

    /// `c_n·Q_n + c_s·W_s`.
    pub fn total_cost(&self) -> f64 {
        self.comm_cost * self.communications as f64 + self.shot_cost * self.shots as f64
    }

    /// Cost the ledger would show after one more communication of `shots`.
    pub fn cost_after(&self, shots: u64) -> f64 {
        self.comm_cost * (self.communications + 1) as f64
            + self.shot_cost * (self.shots + shots) as f64
    }

    pub(crate) fn record(&mut self, shots: u64) {
        self.communications += 1;
        self.shots += shots;
    }
}

/// Free-function form of [`CostLedger::total_cost`].
pub fn total_cost(ledger: &CostLedger) -> f64 {
    ledger.total_cost()
}

// Each draw owns a window of 2^8 ChaCha words, far more than any single
// normal or uniform variate consumes.
const WORDS_PER_DRAW_SHIFT: u32 = 8;

/// Position in a counter-based random stream: `(base seed, substream, cursor)`.
///
/// Sampling `n` draws reads draw indices `cursor..cursor + n` and advances the
/// cursor, so a stage-two top-up continues the sequence of its first stage
/// instead of repeating it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    base_seed: u64,
    substream: u64,
    cursor: u64,
}

impl SeedStream {
    pub fn new(base_seed: u64, substream: u64) -> Self {
        Self {
            base_seed,
            substream,
            cursor: 0,
        }
    }

    /// Deterministic child stream, e.g. one per design-point visit.
    pub fn substream(&self, index: u64) -> SeedStream {
        let mixed = splitmix64(self.substream ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        SeedStream::new(self.base_seed, mixed)
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn substream_index(&self) -> u64 {
        self.substream
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Calls `f` once per draw with a generator positioned at that draw's
    /// counter window, then advances the cursor by `n`.
    pub fn for_each_draw(&mut self, n: u64, mut f: impl FnMut(&mut ChaCha8Rng)) {
        let mut base = ChaCha8Rng::seed_from_u64(self.base_seed);
        base.set_stream(self.substream);
        for i in 0..n {
            let draw = self.cursor + i;
            base.set_word_pos((draw as u128) << WORDS_PER_DRAW_SHIFT);
            f(&mut base);
        }
        self.cursor += n;
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A problem that can be queried for noisy function values.
///
/// Implementations only produce draws; accounting and validation live in
/// [`OracleHandle`].
pub trait StochasticOracle: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Statistics of `n` draws of `F(x, ξ)` read from `stream`.
    fn draw(&self, x: &[f64], n: u64, stream: &mut SeedStream) -> RunningStats;

    /// Noise-free objective `f(x)`, when known in closed form.
    fn exact_mean(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Population variance `σ²(x)`, when known in closed form.
    fn exact_variance(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// `f_min`, when known.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

/// An oracle bound to the ledger of one run.
///
/// Every successful [`OracleHandle::sample`] call adds exactly one
/// communication and `n` shots. When a budget is set, a request whose cost
/// would exceed it is refused with [`OracleError::BudgetExhausted`] and the
/// ledger is left untouched.
#[derive(Clone)]
pub struct OracleHandle {
    oracle: Arc<dyn StochasticOracle>,
    ledger: CostLedger,
    budget: Option<f64>,
}

impl fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleHandle")
            .field("problem", &self.oracle.name())
            .field("dim", &self.oracle.dim())
            .field("ledger", &self.ledger)
            .field("budget", &self.budget)
            .finish()
    }
}

impl OracleHandle {
    pub fn new(oracle: Arc<dyn StochasticOracle>, ledger: CostLedger) -> Self {
        Self {
            oracle,
            ledger,
            budget: None,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn set_budget(&mut self, budget: Option<f64>) {
        self.budget = budget;
    }

    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn problem_name(&self) -> &str {
        self.oracle.name()
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    /// Whether the problem exposes its exact mean (reporting only).
    pub fn has_exact_mean(&self) -> bool {
        let probe = vec![0.0; self.oracle.dim()];
        self.oracle.exact_mean(&probe).is_some()
    }

    /// Underlying problem, for reporting code that needs exact values.
    pub fn problem(&self) -> &Arc<dyn StochasticOracle> {
        &self.oracle
    }

    /// Whether a request of `shots` fits in the remaining budget.
    pub fn can_afford(&self, shots: u64) -> bool {
        match self.budget {
            Some(budget) => self.ledger.cost_after(shots) <= budget * (1.0 + 1e-12),
            None => true,
        }
    }

    /// One communication carrying `n` shots at `x`.
    pub fn sample(
        &mut self,
        x: &[f64],
        n: u64,
        stream: &mut SeedStream,
    ) -> Result<RunningStats, OracleError> {
        if x.len() != self.oracle.dim() {
            return Err(OracleError::DimensionMismatch {
                expected: self.oracle.dim(),
                got: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinitePoint { index });
        }
        if n == 0 {
            return Err(OracleError::ZeroShots);
        }
        if !self.can_afford(n) {
            return Err(OracleError::BudgetExhausted {
                requested: self.ledger.cost_after(n),
                budget: self.budget.unwrap_or(f64::INFINITY),
            });
        }
        let stats = self.oracle.draw(x, n, stream);
        self.ledger.record(n);
        Ok(stats)
    }
}

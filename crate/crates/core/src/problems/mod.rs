//! Built-in stochastic test problems.
//!
//! * [`Himmelblau`]: the Himmelblau function plus `|x₁ − 3|`, with Gaussian
//!   noise whose variance `a·|(x₁−3)(x₂−2)|` vanishes at the global
//!   minimizer `(3, 2)`.
//! * [`QaoaOracle`]: max-cut QAOA on a small graph, simulated with a dense
//!   statevector and sampled shot by shot.

mod graph;
mod himmelblau;
mod qaoa;

pub use graph::{maxcut_bruteforce, Graph, MAX_VERTICES};
pub use himmelblau::{himmelblau_mean, Himmelblau};
pub use qaoa::{qaoa_expectation_exact, qaoa_statevector, sample_state, QaoaOracle, StateVector};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("graph has {0} vertices; at most {MAX_VERTICES} are supported")]
    TooManyVertices(usize),
    #[error("edge ({u}, {v}) references a vertex outside 0..{n}")]
    EdgeOutOfRange { u: usize, v: usize, n: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("bitstring has length {got}, graph has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("QAOA angle vector has length {0}; expected an even, nonzero length")]
    BadAngles(usize),
    #[error("graph file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading graph file: {0}")]
    Io(#[from] std::io::Error),
}

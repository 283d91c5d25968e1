//! Derivative-free stochastic trust-region optimization with
//! communication-aware sampling.

pub mod baselines;
pub mod geometry;
pub mod harness;
pub mod models;
pub mod oracle;
pub mod problems;
pub mod sampling;
pub mod solver;
pub mod subproblem;

//! Exact-moment logging along an incumbent sequence, and rank correlation.

use crate::oracle::StochasticOracle;
use crate::solver::RunResult;

/// Exact optimality gap and population variance at one recorded incumbent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncumbentMoments {
    pub iteration: usize,
    pub cost: f64,
    pub gap: f64,
    pub variance: f64,
}

/// Evaluates the exact gap and variance at every incumbent in the run's
/// trajectory. `None` when the oracle lacks closed-form moments or a known
/// optimal value.
pub fn incumbent_moments(oracle: &dyn StochasticOracle, run: &RunResult) -> Option<Vec<IncumbentMoments>> {
    let f_min = oracle.optimal_value()?;
    run.trajectory
        .iter()
        .map(|r| {
            let x = r.incumbent.as_slice();
            Some(IncumbentMoments {
                iteration: r.iteration,
                cost: r.cost,
                gap: oracle.exact_mean(x)? - f_min,
                variance: oracle.exact_variance(x)?,
            })
        })
        .collect()
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson correlation of average ranks).
///
/// `None` for fewer than two pairs or when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

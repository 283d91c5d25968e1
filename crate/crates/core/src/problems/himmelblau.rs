use rand::Rng;
use rand_distr::StandardNormal;

use crate::oracle::{RunningStats, SeedStream, StochasticOracle};

/// `(x₁² + x₂ − 11)² + (x₁ + x₂² − 7)² + |x₁ − 3|`.
///
/// The extra absolute-value term breaks the tie between Himmelblau's four
/// minimizers so that `(3, 2)` is the unique global minimizer.
pub fn himmelblau_mean(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    (x1 * x1 + x2 - 11.0).powi(2) + (x1 + x2 * x2 - 7.0).powi(2) + (x1 - 3.0).abs()
}

/// Himmelblau with state-dependent Gaussian noise of variance
/// `scale·|(x₁ − 3)(x₂ − 2)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Himmelblau {
    pub scale: f64,
}

impl Himmelblau {
    pub fn new(scale: f64) -> Self {
        assert!(scale >= 0.0 && scale.is_finite(), "noise scale must be nonnegative");
        Self { scale }
    }

    pub fn noise_variance(&self, x: &[f64]) -> f64 {
        self.scale * ((x[0] - 3.0) * (x[1] - 2.0)).abs()
    }
}

impl StochasticOracle for Himmelblau {
    fn name(&self) -> &str {
        "himmelblau"
    }

    fn dim(&self) -> usize {
        2
    }

    fn draw(&self, x: &[f64], n: u64, stream: &mut SeedStream) -> RunningStats {
        let mean = himmelblau_mean(x);
        let sd = self.noise_variance(x).sqrt();
        let mut stats = RunningStats::new();
        stream.for_each_draw(n, |rng| {
            let z: f64 = rng.sample(StandardNormal);
            stats.push(mean + sd * z);
        });
        stats
    }

    fn exact_mean(&self, x: &[f64]) -> Option<f64> {
        Some(himmelblau_mean(x))
    }

    fn exact_variance(&self, x: &[f64]) -> Option<f64> {
        Some(self.noise_variance(x))
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_examples() {
        assert_eq!(himmelblau_mean(&[3.0, 2.0]), 0.0);
        assert_eq!(himmelblau_mean(&[0.0, 0.0]), 173.0);
        let x = [-2.805118, 3.131312];
        let quad = (x[0] * x[0] + x[1] - 11.0_f64).powi(2) + (x[0] + x[1] * x[1] - 7.0_f64).powi(2);
        assert!(quad < 1e-6);
        assert!((himmelblau_mean(&x) - 5.805118).abs() < 1e-4);
    }

    #[test]
    fn noise_free_at_the_minimizer() {
        let h = Himmelblau::new(10.0);
        let stats = h.draw(&[3.0, 2.0], 100, &mut SeedStream::new(5, 0));
        assert_eq!(stats.mean(), 0.0);
        assert_eq!(stats.variance(), 0.0);
    }

    #[test]
    fn sample_moments_at_origin() {
        let h = Himmelblau::new(10.0);
        let n = 100_000u64;
        let stats = h.draw(&[0.0, 0.0], n, &mut SeedStream::new(1, 0));
        assert!((stats.mean() - 173.0).abs() < 5.0 * (60.0 / n as f64).sqrt());
        assert!((stats.variance() - 60.0).abs() < 2.0);
    }
}

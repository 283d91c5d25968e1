use thiserror::Error;

use crate::sampling::{LambdaSchedule, SamplingParams};

/// How new design points and candidates are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Two-stage, first stage `λ_k`.
    Lambda,
    /// Two-stage, first stage from the variance model.
    VarianceModel,
    /// Two-stage, variance model when it is trusted, `λ_k` otherwise.
    Hybrid,
    /// Streaming adaptive sampling with unlimited communications.
    Streaming,
}

impl SamplingStrategy {
    pub fn is_two_stage(self) -> bool {
        !matches!(self, SamplingStrategy::Streaming)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{value}` for `{key}`")]
    Parse { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub delta0: f64,
    pub delta_max: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Certification threshold: a step is only accepted by the model when
    /// `μ‖∇M(X_k)‖ ≥ Δ_k`.
    pub mu: f64,
    /// Sufficient-reduction constant for accepting a design point.
    pub theta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Expansion factor of the region searched for variance-model points.
    pub w: f64,
    pub sampling: SamplingParams,
    pub strategy: SamplingStrategy,
    pub variance_model: bool,
    /// Total cost limit `c_n·Q_n + c_s·W_s`.
    pub budget: f64,
    /// Optional hard limit on iterations.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            delta_max: 10.0,
            eta1: 0.1,
            eta2: 0.5,
            mu: 100.0,
            theta: 1e-3,
            gamma1: 1.5,
            gamma2: 0.75,
            w: 2.0,
            sampling: SamplingParams::default(),
            strategy: SamplingStrategy::Hybrid,
            variance_model: true,
            budget: f64::INFINITY,
            max_iterations: None,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Parse {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl SolverConfig {
    pub fn with_strategy(strategy: SamplingStrategy, variance_model: bool) -> Self {
        Self {
            strategy,
            variance_model,
            ..Self::default()
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_delta0(mut self, delta0: f64) -> Self {
        self.delta0 = delta0;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} is not a positive finite number")))
            }
        };
        positive("delta0", self.delta0)?;
        positive("delta_max", self.delta_max)?;
        positive("mu", self.mu)?;
        positive("theta", self.theta)?;
        positive("kappa", self.sampling.kappa)?;
        if self.delta0 > self.delta_max {
            return Err(invalid("delta0", "must not exceed delta_max"));
        }
        if !(0.0 < self.eta1 && self.eta1 < self.eta2 && self.eta2 < 1.0) {
            return Err(invalid("eta1", "need 0 < eta1 < eta2 < 1"));
        }
        if !(self.gamma1 > 1.0 && self.gamma1.is_finite()) {
            return Err(invalid("gamma1", "must exceed 1"));
        }
        if !(0.0 < self.gamma2 && self.gamma2 < 1.0) {
            return Err(invalid("gamma2", "must lie in (0, 1)"));
        }
        if !(self.w > 1.0 && self.w.is_finite()) {
            return Err(invalid("w", "must exceed 1"));
        }
        if !(self.sampling.c_v >= 0.0 && self.sampling.c_v.is_finite()) {
            return Err(invalid("c_v", "must be nonnegative"));
        }
        if self.sampling.n_max < 2 {
            return Err(invalid("n_max", "must be at least 2"));
        }
        if self.sampling.batch == Some(0) {
            return Err(invalid("batch", "must be positive"));
        }
        if let LambdaSchedule::Logarithmic { scale, exponent } = self.sampling.lambda {
            positive("lambda_scale", scale)?;
            if !exponent.is_finite() {
                return Err(invalid("lambda_exponent", "must be finite"));
            }
        }
        if self.budget.is_nan() || self.budget < 0.0 {
            return Err(invalid("budget", "must be nonnegative"));
        }
        Ok(())
    }

    /// Overrides one field by name. Recognized keys are the field names
    /// plus `kappa`, `c_v`, `n_max`, `batch`, `lambda_scale`,
    /// `lambda_exponent` and `lambda_constant`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "delta0" => self.delta0 = parse(key, value)?,
            "delta_max" => self.delta_max = parse(key, value)?,
            "eta1" => self.eta1 = parse(key, value)?,
            "eta2" => self.eta2 = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "gamma1" => self.gamma1 = parse(key, value)?,
            "gamma2" => self.gamma2 = parse(key, value)?,
            "w" => self.w = parse(key, value)?,
            "variance_model" => self.variance_model = parse(key, value)?,
            "budget" => self.budget = parse(key, value)?,
            "max_iterations" => self.max_iterations = Some(parse(key, value)?),
            "kappa" => self.sampling.kappa = parse(key, value)?,
            "c_v" => self.sampling.c_v = parse(key, value)?,
            "n_max" => self.sampling.n_max = parse(key, value)?,
            "batch" => self.sampling.batch = Some(parse(key, value)?),
            "lambda_constant" => self.sampling.lambda = LambdaSchedule::Constant(parse(key, value)?),
            "lambda_scale" | "lambda_exponent" => {
                let (mut scale, mut exponent) = match self.sampling.lambda {
                    LambdaSchedule::Logarithmic { scale, exponent } => (scale, exponent),
                    LambdaSchedule::Constant(_) => (4.0, 1.1),
                };
                if key == "lambda_scale" {
                    scale = parse(key, value)?;
                } else {
                    exponent = parse(key, value)?;
                }
                self.sampling.lambda = LambdaSchedule::Logarithmic { scale, exponent };
            }
            "strategy" => {
                self.strategy = match value.trim() {
                    "lambda" | "1" => SamplingStrategy::Lambda,
                    "varmodel" | "2" => SamplingStrategy::VarianceModel,
                    "hybrid" | "3" => SamplingStrategy::Hybrid,
                    "streaming" => SamplingStrategy::Streaming,
                    _ => {
                        return Err(ConfigError::Parse {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_thresholds() {
        let mut c = SolverConfig::default();
        c.eta1 = 0.6;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.delta0 = 20.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.gamma2 = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn set_by_key() {
        let mut c = SolverConfig::default();
        c.set("delta0", "0.5").unwrap();
        c.set("lambda_constant", "7").unwrap();
        c.set("strategy", "2").unwrap();
        assert_eq!(c.delta0, 0.5);
        assert_eq!(c.sampling.lambda, LambdaSchedule::Constant(7));
        assert_eq!(c.strategy, SamplingStrategy::VarianceModel);
        assert_eq!(c.set("nope", "1"), Err(ConfigError::UnknownKey("nope".into())));
        assert!(matches!(c.set("mu", "abc"), Err(ConfigError::Parse { .. })));
    }
}

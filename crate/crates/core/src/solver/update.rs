use super::SolverConfig;

/// Which of the four acceptance cases fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// A design point beat the model candidate; it becomes the incumbent.
    DirectSearch,
    VerySuccessful,
    Successful,
    Unsuccessful,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::DirectSearch => "direct-search",
            Outcome::VerySuccessful => "very-successful",
            Outcome::Successful => "successful",
            Outcome::Unsuccessful => "unsuccessful",
        }
    }
}

/// Estimated reductions for one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reductions {
    /// `M(X_k) − M(X̃)`.
    pub predicted: f64,
    /// `F̄(X_k) − F̄(X̃)`.
    pub candidate: f64,
    /// `F̄(X_k) − F̄(X̂)` for the best design point `X̂`.
    pub design: f64,
    /// `‖∇M(X_k)‖`.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub outcome: Outcome,
    pub delta: f64,
}

/// Applies the four acceptance cases in order.
///
/// The ratio tests additionally require a positive predicted reduction; a
/// zero model step cannot be accepted.
pub fn update_rule(r: &Reductions, delta: f64, config: &SolverConfig) -> Decision {
    let expand = (config.gamma1 * delta).min(config.delta_max);
    if r.design > r.candidate.max(config.theta * delta * delta) {
        return Decision {
            outcome: Outcome::DirectSearch,
            delta: expand,
        };
    }
    let certified = config.mu * r.gradient_norm >= delta && r.predicted > 0.0;
    if certified && r.candidate >= config.eta2 * r.predicted {
        return Decision {
            outcome: Outcome::VerySuccessful,
            delta: expand,
        };
    }
    if certified && r.candidate >= config.eta1 * r.predicted {
        return Decision {
            outcome: Outcome::Successful,
            delta,
        };
    }
    Decision {
        outcome: Outcome::Unsuccessful,
        delta: config.gamma2 * delta,
    }
}

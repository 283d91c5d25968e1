//! Trust-region subproblem for diagonal quadratics.
//!
//! Minimizes `gᵀt + ½ Σ hᵢtᵢ²` over `‖t‖ ≤ Δ` exactly. Because the Hessian
//! is diagonal, the optimality conditions reduce to the scalar secular
//! equation `‖t(λ)‖ = Δ` with `tᵢ(λ) = −gᵢ / (hᵢ + λ)` and
//! `λ ≥ max(0, −min hᵢ)`. The hard case (the gradient has no component along
//! the most negative curvature direction) is completed with a boundary
//! component along that direction.

use nalgebra::DVector;

use crate::models::QuadDiagModel;

const MAX_SECULAR_ITERS: usize = 60;
const SECULAR_TOL: f64 = 1e-12;

/// Result of a trust-region step computation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrStep {
    /// Step from the model center, in the original coordinates.
    pub step: DVector<f64>,
    /// `M(center) − M(center + step)`.
    pub predicted_reduction: f64,
    pub on_boundary: bool,
}

impl TrStep {
    pub fn candidate(&self, center: &DVector<f64>) -> DVector<f64> {
        center + &self.step
    }
}

/// Minimizes `model` over the ball of radius `radius` around its center.
pub fn solve(model: &QuadDiagModel, radius: f64) -> TrStep {
    let g = model.frame_gradient();
    let (t, on_boundary) = solve_diagonal(g.as_slice(), model.curvature.as_slice(), radius);
    let t = DVector::from_vec(t);
    let step = model.step_from_frame(&t);
    let predicted_reduction = -diagonal_value(g.as_slice(), model.curvature.as_slice(), t.as_slice());
    TrStep {
        step,
        predicted_reduction: predicted_reduction.max(0.0),
        on_boundary,
    }
}

/// `gᵀt + ½ Σ hᵢtᵢ²`.
pub fn diagonal_value(g: &[f64], h: &[f64], t: &[f64]) -> f64 {
    g.iter()
        .zip(h)
        .zip(t)
        .map(|((gi, hi), ti)| gi * ti + 0.5 * hi * ti * ti)
        .sum()
}

fn step_at(g: &[f64], h: &[f64], lambda: f64) -> Vec<f64> {
    g.iter()
        .zip(h)
        .map(|(gi, hi)| {
            let denom = hi + lambda;
            if *gi == 0.0 {
                0.0
            } else {
                -gi / denom
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Global minimizer of `gᵀt + ½ Σ hᵢtᵢ²` over `‖t‖ ≤ radius`.
///
/// Returns the step and whether it lies on the boundary.
pub fn solve_diagonal(g: &[f64], h: &[f64], radius: f64) -> (Vec<f64>, bool) {
    assert_eq!(g.len(), h.len());
    assert!(radius > 0.0, "trust-region radius must be positive");
    let d = g.len();
    if d == 0 {
        return (Vec::new(), false);
    }
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let g_norm = norm(g);
    let lambda_lo = (-h_min).max(0.0);

    // Interior Newton step when the model is convex along every direction
    // the gradient touches and the step fits.
    if h_min >= 0.0 {
        let interior_ok = g.iter().zip(h).all(|(gi, hi)| *hi > 0.0 || *gi == 0.0);
        if interior_ok {
            let t = step_at(g, h, 0.0);
            if norm(&t) <= radius {
                return (t, false);
            }
        }
    }
    if g_norm == 0.0 && h_min >= 0.0 {
        return (vec![0.0; d], false);
    }

    // Hard case: no gradient component along the most negative curvature
    // directions and the limiting step is strictly inside the ball.
    let hard = g
        .iter()
        .zip(h)
        .filter(|(_, hi)| **hi <= h_min)
        .all(|(gi, _)| *gi == 0.0);
    if hard && h_min < 0.0 {
        let t = step_at(g, h, lambda_lo);
        let t_norm = norm(&t);
        if t_norm < radius {
            return (complete_to_boundary(t, h, h_min, radius), true);
        }
    }

    // Secular equation on the monotone branch, in the form
    // ψ(λ) = 1/‖t(λ)‖ − 1/Δ, which is close to linear in λ.
    let mut lo = lambda_lo;
    let mut hi = (g_norm / radius - h_min).max(lambda_lo) + 1e-300;
    while norm(&step_at(g, h, hi)) > radius {
        hi = 2.0 * hi + 1.0;
    }
    let mut lambda = hi;
    for _ in 0..MAX_SECULAR_ITERS {
        let t = step_at(g, h, lambda);
        let t_norm = norm(&t);
        let resid = t_norm - radius;
        if resid.abs() <= SECULAR_TOL * radius.max(1.0) {
            break;
        }
        if resid > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // dψ/dλ = (Σ tᵢ²/(hᵢ+λ)) / ‖t‖³
        let w: f64 = t
            .iter()
            .zip(h)
            .map(|(ti, hi_)| ti * ti / (hi_ + lambda))
            .sum();
        let psi = 1.0 / t_norm - 1.0 / radius;
        let dpsi = w / (t_norm * t_norm * t_norm);
        let newton = lambda - psi / dpsi;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let mut t = step_at(g, h, lambda);
    let t_norm = norm(&t);
    if t_norm > radius {
        let scale = radius / t_norm;
        t.iter_mut().for_each(|x| *x *= scale);
    } else if t_norm < radius * (1.0 - 1e-10) && h_min < 0.0 {
        t = complete_to_boundary(t, h, h_min, radius);
    }
    (t, true)
}

fn complete_to_boundary(mut t: Vec<f64>, h: &[f64], h_min: f64, radius: f64) -> Vec<f64> {
    let j = h.iter().position(|hi| *hi <= h_min).unwrap_or(0);
    let rest: f64 = t
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, x)| x * x)
        .sum();
    let tau = (radius * radius - rest).max(0.0).sqrt();
    // Either sign is optimal; keep the sign that already points the same
    // way, defaulting to positive.
    t[j] = if t[j] < 0.0 { -tau } else { tau };
    t
}

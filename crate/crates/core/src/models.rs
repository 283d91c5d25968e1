//! Quadratic models with a diagonal Hessian.
//!
//! A model has the form
//!
//! ```text
//! M(x) = β₀ + (x − c)ᵀ G + ½ Σᵢ hᵢ (uᵢᵀ (x − c))²
//! ```
//!
//! where the `uᵢ` are the orthonormal columns of the model frame. For an
//! elementary stencil the frame is the identity and the Hessian is literally
//! `diag(h)`. For a rotated design set the Hessian is diagonal in the
//! rotated basis, which is what keeps such sets poised for the basis
//! `{1, y₁…y_d, y₁²…y_d²}`.
//!
//! Coefficients are solved in the shifted and scaled frame
//! `y = Uᵀ(x − c)/r` and then unscaled.

use nalgebra::{DMatrix, DVector, SVD};
use thiserror::Error;

use crate::geometry::DesignSet;

/// Reciprocal condition number below which a regression design matrix is
/// treated as having no usable pseudoinverse.
pub const PSEUDOINVERSE_RCOND: f64 = 1e-10;

/// Reciprocal condition number below which an interpolation system is
/// reported as singular.
const INTERPOLATION_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("interpolation system is singular (reciprocal condition {rcond:e})")]
    Singular { rcond: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in model data")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Objective,
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadDiagModel {
    pub kind: ModelKind,
    pub center: DVector<f64>,
    pub radius: f64,
    pub intercept: f64,
    /// Gradient at the center, in the original coordinates.
    pub gradient: DVector<f64>,
    /// Diagonal Hessian entries in the model frame.
    pub curvature: DVector<f64>,
    /// Orthonormal frame columns; `None` means the identity.
    pub frame: Option<DMatrix<f64>>,
}

impl QuadDiagModel {
    /// Model in the identity frame.
    pub fn new(
        kind: ModelKind,
        center: DVector<f64>,
        radius: f64,
        intercept: f64,
        gradient: DVector<f64>,
        curvature: DVector<f64>,
    ) -> Self {
        Self {
            kind,
            center,
            radius,
            intercept,
            gradient,
            curvature,
            frame: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn to_frame(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.frame {
            Some(u) => u.tr_mul(v),
            None => v.clone(),
        }
    }

    fn from_frame(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.frame {
            Some(u) => u * v,
            None => v.clone(),
        }
    }

    /// Gradient at the center expressed in frame coordinates.
    pub fn frame_gradient(&self) -> DVector<f64> {
        self.to_frame(&self.gradient)
    }

    /// Maps a step given in frame coordinates back to the original space.
    pub fn step_from_frame(&self, t: &DVector<f64>) -> DVector<f64> {
        self.from_frame(t)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let s = x - &self.center;
        let t = self.to_frame(&s);
        let quad: f64 = t
            .iter()
            .zip(self.curvature.iter())
            .map(|(ti, hi)| hi * ti * ti)
            .sum();
        self.intercept + s.dot(&self.gradient) + 0.5 * quad
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = x - &self.center;
        let t = self.to_frame(&s).component_mul(&self.curvature);
        &self.gradient + self.from_frame(&t)
    }

    /// Model value clamped at zero, for use as a variance prediction.
    pub fn predict_variance(&self, x: &DVector<f64>) -> f64 {
        self.evaluate(x).max(0.0)
    }
}

/// Evaluates `M(x)`.
pub fn evaluate(model: &QuadDiagModel, x: &DVector<f64>) -> f64 {
    model.evaluate(x)
}

/// Evaluates `∇M(x) = G + U diag(h) Uᵀ (x − c)`.
pub fn gradient(model: &QuadDiagModel, x: &DVector<f64>) -> DVector<f64> {
    model.gradient_at(x)
}

fn design_matrix(
    center: &DVector<f64>,
    frame: Option<&DMatrix<f64>>,
    scale: f64,
    points: &[DVector<f64>],
) -> DMatrix<f64> {
    let d = center.len();
    let mut m = DMatrix::zeros(points.len(), 2 * d + 1);
    for (row, p) in points.iter().enumerate() {
        let s = p - center;
        let y = match frame {
            Some(u) => u.tr_mul(&s),
            None => s,
        } / scale;
        m[(row, 0)] = 1.0;
        for i in 0..d {
            m[(row, 1 + i)] = y[i];
            m[(row, 1 + d + i)] = y[i] * y[i];
        }
    }
    m
}

fn rcond_of(svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, ncols: usize) -> f64 {
    let sv = &svd.singular_values;
    if sv.len() < ncols {
        return 0.0;
    }
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// `σ_min / σ_max` of the scaled interpolation matrix of a design set.
pub fn poisedness_rcond(design: &DesignSet) -> f64 {
    let frame = (!design.has_identity_basis()).then_some(&design.basis);
    let m = design_matrix(&design.center, frame, design.radius, &design.points);
    let ncols = m.ncols();
    let svd = SVD::new(m, false, false);
    rcond_of(&svd, ncols)
}

struct Fit {
    coefficients: DVector<f64>,
    rcond: f64,
}

fn least_squares(m: DMatrix<f64>, values: &[f64]) -> Fit {
    let ncols = m.ncols();
    let svd = SVD::new(m, true, true);
    let rcond = rcond_of(&svd, ncols);
    let b = DVector::from_column_slice(values);
    let coefficients = svd
        .solve(&b, 0.0)
        .unwrap_or_else(|_| DVector::zeros(ncols));
    Fit {
        coefficients,
        rcond,
    }
}

fn unpack(
    kind: ModelKind,
    center: &DVector<f64>,
    radius: f64,
    scale: f64,
    frame: Option<DMatrix<f64>>,
    beta: &DVector<f64>,
) -> QuadDiagModel {
    let d = center.len();
    let frame_grad = DVector::from_fn(d, |i, _| beta[1 + i] / scale);
    let curvature = DVector::from_fn(d, |i, _| 2.0 * beta[1 + d + i] / (scale * scale));
    let gradient = match &frame {
        Some(u) => u * frame_grad,
        None => frame_grad,
    };
    QuadDiagModel {
        kind,
        center: center.clone(),
        radius,
        intercept: beta[0],
        gradient,
        curvature,
        frame,
    }
}

/// Interpolates `values` (one per design point, in design order).
pub fn build_interpolation(design: &DesignSet, values: &[f64]) -> Result<QuadDiagModel, ModelError> {
    if values.len() != design.len() {
        return Err(ModelError::LengthMismatch {
            expected: design.len(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let frame = (!design.has_identity_basis()).then(|| design.basis.clone());
    let m = design_matrix(&design.center, frame.as_ref(), design.radius, &design.points);
    let fit = least_squares(m, values);
    if fit.rcond < INTERPOLATION_RCOND {
        return Err(ModelError::Singular { rcond: fit.rcond });
    }
    Ok(unpack(
        ModelKind::Objective,
        &design.center,
        design.radius,
        design.radius,
        frame,
        &fit.coefficients,
    ))
}

/// Outcome of a variance-model fit.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceFit {
    Model(QuadDiagModel),
    /// The regression matrix has no numerically usable pseudoinverse.
    RankDeficient { rcond: f64 },
}

impl VarianceFit {
    pub fn model(self) -> Option<QuadDiagModel> {
        match self {
            VarianceFit::Model(m) => Some(m),
            VarianceFit::RankDeficient { .. } => None,
        }
    }
}

/// Interpolates (m = 2d+1) or least-squares fits (m > 2d+1) sample variances
/// with a diagonal quadratic in the identity frame, centered at `center` and
/// scaled by `scale`.
pub fn build_variance_model(
    center: &DVector<f64>,
    scale: f64,
    points: &[DVector<f64>],
    variances: &[f64],
) -> Result<VarianceFit, ModelError> {
    if points.len() != variances.len() {
        return Err(ModelError::LengthMismatch {
            expected: points.len(),
            got: variances.len(),
        });
    }
    if variances.iter().any(|v| !v.is_finite()) || !scale.is_finite() || scale <= 0.0 {
        return Err(ModelError::NonFinite);
    }
    let d = center.len();
    if points.len() < 2 * d + 1 {
        return Ok(VarianceFit::RankDeficient { rcond: 0.0 });
    }
    let m = design_matrix(center, None, scale, points);
    let fit = least_squares(m, variances);
    if fit.rcond <= PSEUDOINVERSE_RCOND {
        return Ok(VarianceFit::RankDeficient { rcond: fit.rcond });
    }
    Ok(VarianceFit::Model(unpack(
        ModelKind::Variance,
        center,
        scale,
        scale,
        None,
        &fit.coefficients,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{choose_design_set, coordinate_stencil};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    // Plain Gaussian elimination with partial pivoting, kept separate from
    // the SVD route used by the models.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn unit_stencil_recovers_known_quadratic() {
        let set = coordinate_stencil(&v(&[0.0, 0.0]), 1.0, &DMatrix::identity(2, 2)).unwrap();
        let values = [1.0, 4.0, 4.5, 0.0, -1.5];
        // Independent route: raw monomial system solved by elimination.
        let rows: Vec<Vec<f64>> = set
            .points
            .iter()
            .map(|p| vec![1.0, p[0], p[1], p[0] * p[0], p[1] * p[1]])
            .collect();
        let beta = gauss_solve(rows, values.to_vec());
        assert!((beta[0] - 1.0).abs() < 1e-12);
        assert!((beta[1] - 2.0).abs() < 1e-12);
        assert!((beta[2] - 3.0).abs() < 1e-12);
        assert!((2.0 * beta[3] - 2.0).abs() < 1e-12);
        assert!((2.0 * beta[4] - 1.0).abs() < 1e-12);

        let model = build_interpolation(&set, &values).unwrap();
        assert!((model.intercept - 1.0).abs() < 1e-12);
        assert!((&model.gradient - v(&[2.0, 3.0])).amax() < 1e-12);
        assert!((&model.curvature - v(&[2.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn constant_values_give_flat_model() {
        let c = v(&[1.0, -2.0, 0.5]);
        let prior = v(&[1.3, -2.2, 0.6]);
        let set = choose_design_set(&c, 0.7, [&prior]).unwrap();
        let model = build_interpolation(&set, &vec![3.25; set.len()]).unwrap();
        assert!((model.intercept - 3.25).abs() < 1e-12);
        assert!(model.gradient.amax() < 1e-12);
        assert!(model.curvature.amax() < 1e-12);
    }

    #[test]
    fn evaluate_and_gradient_examples() {
        let m = QuadDiagModel::new(
            ModelKind::Objective,
            v(&[0.0, 0.0]),
            1.0,
            1.0,
            v(&[2.0, 3.0]),
            v(&[2.0, 1.0]),
        );
        assert_eq!(evaluate(&m, &v(&[0.0, 0.0])), 1.0);
        assert_eq!(gradient(&m, &v(&[0.0, 0.0])), v(&[2.0, 3.0]));
        assert_eq!(evaluate(&m, &v(&[1.0, 0.0])), 4.0);
    }

    #[test]
    fn variance_model_recovers_x1_squared() {
        let set = coordinate_stencil(&v(&[0.0, 0.0]), 1.0, &DMatrix::identity(2, 2)).unwrap();
        let vars: Vec<f64> = set.points.iter().map(|p| p[0] * p[0]).collect();
        let fit = build_variance_model(&set.center, 1.0, &set.points, &vars).unwrap();
        let m = fit.model().unwrap();
        assert!((m.curvature[0] - 2.0).abs() < 1e-12);
        assert!(m.curvature[1].abs() < 1e-12);
        assert!(m.gradient.amax() < 1e-12);
        assert_eq!(m.kind, ModelKind::Variance);
    }

    #[test]
    fn regression_of_constant_variance() {
        let c = v(&[0.0, 0.0]);
        let pts: Vec<DVector<f64>> = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [-1.0, 0.0],
            [0.0, -1.0],
            [0.5, 0.5],
            [-0.7, 0.2],
        ]
        .iter()
        .map(|p| v(p))
        .collect();
        let fit = build_variance_model(&c, 1.0, &pts, &[5.0; 7]).unwrap();
        let m = fit.model().unwrap();
        assert!((m.intercept - 5.0).abs() < 1e-12);
        assert!(m.gradient.amax() < 1e-12);
        assert!(m.curvature.amax() < 1e-12);
    }

    #[test]
    fn collinear_points_are_rank_deficient() {
        let c = v(&[0.0, 0.0]);
        let pts: Vec<DVector<f64>> = (0..5).map(|i| v(&[i as f64 * 0.3, i as f64 * 0.6])).collect();
        // Independent check: the monomial matrix has a zero singular value
        // because the y column is exactly twice the x column.
        let m = DMatrix::from_fn(5, 5, |r, col| {
            let p = &pts[r];
            [1.0, p[0], p[1], p[0] * p[0], p[1] * p[1]][col]
        });
        let sv = SVD::new(m, false, false).singular_values;
        assert!(sv.min() / sv.max() < 1e-12);
        let fit = build_variance_model(&c, 1.0, &pts, &[1.0; 5]).unwrap();
        assert!(matches!(fit, VarianceFit::RankDeficient { .. }));
    }

    #[test]
    fn too_few_points_are_rank_deficient() {
        let c = v(&[0.0, 0.0]);
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0])];
        let fit = build_variance_model(&c, 1.0, &pts, &[1.0, 1.0]).unwrap();
        assert!(matches!(fit, VarianceFit::RankDeficient { .. }));
    }

    #[test]
    fn square_regression_equals_interpolation() {
        let c = v(&[0.2, -0.1]);
        let set = coordinate_stencil(&c, 0.5, &DMatrix::identity(2, 2)).unwrap();
        let vals: Vec<f64> = set.points.iter().map(|p| 1.0 + p[0] - 2.0 * p[1] + 3.0 * p[0] * p[0]).collect();
        let interp = build_interpolation(&set, &vals).unwrap();
        let reg = build_variance_model(&c, 0.5, &set.points, &vals).unwrap().model().unwrap();
        assert!((interp.intercept - reg.intercept).abs() < 1e-8);
        assert!((&interp.gradient - &reg.gradient).amax() < 1e-8);
        assert!((&interp.curvature - &reg.curvature).amax() < 1e-8);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let set = coordinate_stencil(&v(&[0.0]), 1.0, &DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(
            build_interpolation(&set, &[1.0]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }
}

//! Design-set geometry.
//!
//! Every design set has `2d + 1` points: the center plus one point on each
//! side of the center along `d` orthonormal directions. With no reusable
//! history the directions are the elementary basis (a coordinate stencil).
//! Otherwise the farthest previously evaluated point inside the trust region
//! fixes the first direction, and the rest of the basis is completed
//! orthogonally (a rotated coordinate basis).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::models::poisedness_rcond;

/// Tolerance below which two points are treated as the same point.
pub const POINT_TOLERANCE: f64 = 1e-12;

/// Minimum reciprocal condition number accepted for a rotated design set.
pub const MIN_DESIGN_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("basis is not orthonormal (max Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("basis has {got} vectors of length {len}, expected {expected}")]
    BadBasisShape { expected: usize, got: usize, len: usize },
    #[error("direction vector has zero length")]
    ZeroVector,
    #[error("direction vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("trust-region radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// Elementary-basis stencil.
    Stencil,
    /// Basis rotated toward a reused history point.
    Rotated,
}

/// `2d + 1` interpolation points around a center.
///
/// Layout: index 0 is the center, indices `1..=d` step along `+basis[i]`,
/// indices `d+1..=2d` along `-basis[i]`. For a rotated set index 1 is the
/// reused point (`center + reuse_distance·basis[0]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub center: DVector<f64>,
    pub radius: f64,
    pub points: Vec<DVector<f64>>,
    pub reused: Vec<bool>,
    /// Orthonormal directions, one matrix column each.
    pub basis: DMatrix<f64>,
    pub reuse_distance: f64,
    pub kind: DesignKind,
    /// Position in the caller's history of the reused point, if any.
    pub reused_source: Option<usize>,
}

impl DesignSet {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_stencil(&self) -> bool {
        self.kind == DesignKind::Stencil
    }

    /// Whether the basis is the identity (model frame needs no rotation).
    pub fn has_identity_basis(&self) -> bool {
        let d = self.dim();
        self.basis == DMatrix::identity(d, d)
    }

    /// Index of the member closest to `x` (first one on ties).
    pub fn nearest_index(&self, x: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let dist = (p - x).norm();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }
}

fn check_radius(radius: f64) -> Result<(), GeometryError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::BadRadius(radius))
    }
}

fn gram_deviation(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.transpose() * basis;
    let identity = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    (gram - identity).amax()
}

/// `{X, X ± Δ·u_i}` for the orthonormal columns `u_i` of `basis`.
pub fn coordinate_stencil(
    center: &DVector<f64>,
    radius: f64,
    basis: &DMatrix<f64>,
) -> Result<DesignSet, GeometryError> {
    check_radius(radius)?;
    let d = center.len();
    if basis.nrows() != d || basis.ncols() != d {
        return Err(GeometryError::BadBasisShape {
            expected: d,
            got: basis.ncols(),
            len: basis.nrows(),
        });
    }
    let deviation = gram_deviation(basis);
    if deviation > 1e-8 {
        return Err(GeometryError::NotOrthonormal { deviation });
    }
    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(center.clone());
    for i in 0..d {
        points.push(center + basis.column(i) * radius);
    }
    for i in 0..d {
        points.push(center - basis.column(i) * radius);
    }
    Ok(DesignSet {
        center: center.clone(),
        radius,
        reused: vec![false; points.len()],
        points,
        basis: basis.clone(),
        reuse_distance: 0.0,
        kind: DesignKind::Stencil,
        reused_source: None,
    })
}

/// `d − 1` orthonormal vectors completing `u1` to an orthonormal basis.
///
/// Uses the Householder reflector that maps `e_1` onto `±u1`; its remaining
/// columns are the complement.
pub fn orthonormal_complement(u1: &DVector<f64>) -> Result<Vec<DVector<f64>>, GeometryError> {
    let norm = u1.norm();
    if norm == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    if (norm - 1.0).abs() > 1e-10 {
        return Err(GeometryError::NotUnit { norm });
    }
    let d = u1.len();
    let sign = if u1[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u1.clone();
    v[0] += sign;
    let vv = v.norm_squared();
    let mut out = Vec::with_capacity(d.saturating_sub(1));
    for j in 1..d {
        let mut col = v.clone() * (-2.0 * v[j] / vv);
        col[j] += 1.0;
        out.push(col);
    }
    Ok(out)
}

fn rotated_set(
    center: &DVector<f64>,
    radius: f64,
    reused: &DVector<f64>,
    source: usize,
) -> Result<DesignSet, GeometryError> {
    let d = center.len();
    let offset = reused - center;
    let reuse_distance = offset.norm();
    let u1 = offset / reuse_distance;
    let complement = orthonormal_complement(&u1)?;
    let mut basis = DMatrix::zeros(d, d);
    basis.set_column(0, &u1);
    for (j, c) in complement.iter().enumerate() {
        basis.set_column(j + 1, c);
    }
    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(center.clone());
    points.push(reused.clone());
    for j in 1..d {
        points.push(center + basis.column(j) * radius);
    }
    for j in 0..d {
        points.push(center - basis.column(j) * radius);
    }
    let mut flags = vec![false; points.len()];
    flags[1] = true;
    Ok(DesignSet {
        center: center.clone(),
        radius,
        points,
        reused: flags,
        basis,
        reuse_distance,
        kind: DesignKind::Rotated,
        reused_source: Some(source),
    })
}

/// Design set for the trust region `B(center; radius)` given the evaluation
/// history (oldest first).
///
/// The farthest distinct history point in the closed ball is reused (oldest
/// wins ties). If the resulting set is not numerically poised the next
/// farthest candidate is tried, and with no usable candidate the elementary
/// stencil is returned.
pub fn choose_design_set<'a, I>(
    center: &DVector<f64>,
    radius: f64,
    history: I,
) -> Result<DesignSet, GeometryError>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    check_radius(radius)?;
    let d = center.len();
    let mut candidates: Vec<(usize, f64, &DVector<f64>)> = history
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let dist = (p - center).norm();
            (dist > POINT_TOLERANCE && dist <= radius).then_some((i, dist, p))
        })
        .collect();
    // Stable sort keeps history order among equal distances.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (source, _, point) in candidates {
        let set = rotated_set(center, radius, point, source)?;
        if poisedness_rcond(&set) > MIN_DESIGN_RCOND {
            return Ok(set);
        }
    }
    coordinate_stencil(center, radius, &DMatrix::identity(d, d))
}

//! Pointwise Lorentzian algebra in the distinguished frame {n, E1, E2, E3}.
//!
//! Conventions: signature (-,+,+,+), coordinate index 0 is time. For a metric
//! g the vector n^mu = (g^{-1})^{mu 0} satisfies g(n, E_i) = 0 for the three
//! spatial coordinate axes and g(n, n) = (g^{-1})^{00}, so g splits into the
//! 1x1 block g(n,n) and the spatial 3x3 block G_{ij} = g_{ij} exactly when
//! (g^{-1})^{00} < 0. Fractional powers of the spatial block use a symmetric
//! eigendecomposition with a fixed ordering and sign convention so that every
//! run reproduces the same matrices bit for bit.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::Metric;

/// Determinant floor below which a frame no longer counts as a basis.
pub const FRAME_DET_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LorentzError {
    #[error("non-finite coordinates {0:?}")]
    NonFinitePoint([f64; 4]),
    #[error("metric evaluation failed at {point:?}: {reason}")]
    Evaluation { point: [f64; 4], reason: String },
    #[error("metric is singular")]
    SingularMetric,
    #[error("slice normal is not timelike here: g(n,n) = {lapse2}")]
    NotGloballyHyperbolicHere { lapse2: f64 },
    #[error("signature failure: {0}")]
    Signature(String),
    #[error("frame is degenerate: |det| = {det}")]
    DegenerateFrame { det: f64 },
}

/// A point (t, x1, x2, x3) on the fixed global chart R x R^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: [f64; 3],
}

impl SpacetimePoint {
    pub fn new(t: f64, x: [f64; 3]) -> Result<Self, LorentzError> {
        let p = Self { t, x };
        if p.coords().iter().all(|c| c.is_finite()) {
            Ok(p)
        } else {
            Err(LorentzError::NonFinitePoint(p.coords()))
        }
    }

    pub fn from_coords(c: [f64; 4]) -> Result<Self, LorentzError> {
        Self::new(c[0], [c[1], c[2], c[3]])
    }

    pub fn origin() -> Self {
        Self { t: 0.0, x: [0.0; 3] }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.t, self.x[0], self.x[1], self.x[2]]
    }

    pub fn vector(&self) -> Vector4<f64> {
        Vector4::new(self.t, self.x[0], self.x[1], self.x[2])
    }

    /// Shift one coordinate; used by finite-difference stencils.
    pub fn shifted(&self, axis: usize, delta: f64) -> Self {
        let mut c = self.coords();
        c[axis] += delta;
        Self { t: c[0], x: [c[1], c[2], c[3]] }
    }
}

pub fn minkowski() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0))
}

// ---------------------------------------------------------------------------
// canonical symmetric eigendecomposition
// ---------------------------------------------------------------------------

/// Symmetric eigendecomposition of a 4x4 matrix with ascending eigenvalues
/// and each eigenvector's first nonzero component made positive, so the
/// factorization is unique (up to degenerate subspaces) and reproducible.
pub fn sym_eigen4(g: &Matrix4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
    let se = nalgebra::SymmetricEigen::new(*g);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vals = Vector4::zeros();
    let mut vecs = Matrix4::zeros();
    for (slot, &idx) in order.iter().enumerate() {
        vals[slot] = se.eigenvalues[idx];
        let mut col = se.eigenvectors.column(idx).into_owned();
        if let Some(first) = col.iter().find(|c| **c != 0.0) {
            if *first < 0.0 {
                col = -col;
            }
        }
        vecs.set_column(slot, &col);
    }
    (vals, vecs)
}

/// 3x3 variant of [`sym_eigen4`], same ordering and sign convention.
pub fn sym_eigen3(g: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let se = nalgebra::SymmetricEigen::new(*g);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vals = Vector3::zeros();
    let mut vecs = Matrix3::zeros();
    for (slot, &idx) in order.iter().enumerate() {
        vals[slot] = se.eigenvalues[idx];
        let mut col = se.eigenvectors.column(idx).into_owned();
        if let Some(first) = col.iter().find(|c| **c != 0.0) {
            if *first < 0.0 {
                col = -col;
            }
        }
        vecs.set_column(slot, &col);
    }
    (vals, vecs)
}

/// True when g has exactly one negative and three positive eigenvalues.
pub fn lorentzian_signature(g: &Matrix4<f64>) -> bool {
    if !g.iter().all(|c| c.is_finite()) {
        return false;
    }
    let (vals, _) = sym_eigen4(g);
    vals[0] < 0.0 && vals[1] > 0.0 && vals[2] > 0.0 && vals[3] > 0.0
}

// ---------------------------------------------------------------------------
// the frame {n, E1, E2, E3}
// ---------------------------------------------------------------------------

/// n^mu = (g^{-1})^{mu 0}, the g-dual of the dt axis.
pub fn normal_vector(g: &Matrix4<f64>) -> Result<Vector4<f64>, LorentzError> {
    let inv = g.try_inverse().ok_or(LorentzError::SingularMetric)?;
    if !inv.iter().all(|c| c.is_finite()) {
        return Err(LorentzError::SingularMetric);
    }
    Ok(inv.column(0).into_owned())
}

/// The lapse/spatial split of g in the frame {n, E1, E2, E3}.
#[derive(Debug, Clone, Copy)]
pub struct BlockForm {
    /// g(n, n) = (g^{-1})^{00}; negative on regular slices.
    pub lapse2: f64,
    /// The spatial block G_{ij} = g(E_i, E_j), positive definite.
    pub spatial: Matrix3<f64>,
}

/// Split g into diag(g(n,n), G). Fails when the normal is not timelike or
/// the spatial block is not positive definite.
pub fn block_decompose(g: &Matrix4<f64>) -> Result<BlockForm, LorentzError> {
    let lapse2 = normal_vector(g)?[0];
    if !(lapse2 < 0.0) {
        return Err(LorentzError::NotGloballyHyperbolicHere { lapse2 });
    }
    let spatial: Matrix3<f64> = g.fixed_view::<3, 3>(1, 1).into_owned();
    let (vals, _) = sym_eigen3(&spatial);
    if !(vals[0] > 0.0) {
        return Err(LorentzError::Signature(format!(
            "spatial block not positive definite (min eigenvalue {})",
            vals[0]
        )));
    }
    Ok(BlockForm { lapse2, spatial })
}

/// Column basis [m | E1 | E2 | E3]; valid only while it stays a basis.
#[derive(Debug, Clone, Copy)]
pub struct FrameBasis {
    columns: Matrix4<f64>,
}

impl FrameBasis {
    pub fn new(columns: Matrix4<f64>) -> Result<Self, LorentzError> {
        let det = columns.determinant();
        if !(det.abs() > FRAME_DET_FLOOR) {
            return Err(LorentzError::DegenerateFrame { det });
        }
        Ok(Self { columns })
    }

    /// Basis with first column m and the spatial coordinate axes.
    pub fn with_time_leg(m: &Vector4<f64>) -> Result<Self, LorentzError> {
        let mut columns = Matrix4::identity();
        columns.set_column(0, m);
        Self::new(columns)
    }

    pub fn columns(&self) -> &Matrix4<f64> {
        &self.columns
    }

    pub fn inverse(&self) -> Result<Matrix4<f64>, LorentzError> {
        self.columns.try_inverse().ok_or(LorentzError::DegenerateFrame {
            det: self.columns.determinant(),
        })
    }
}

// ---------------------------------------------------------------------------
// fractional powers of SPD matrices
// ---------------------------------------------------------------------------

/// G^s for symmetric positive definite G via the canonical eigensystem.
/// s = 0 and s = 1 return the exact identity / input.
pub fn spd_power(g: &Matrix3<f64>, s: f64) -> Result<Matrix3<f64>, LorentzError> {
    let scale = g.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let asym = (g - g.transpose()).iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if asym > 1e-12 * (1.0 + scale) {
        return Err(LorentzError::Signature(format!(
            "input not symmetric (asymmetry {asym})"
        )));
    }
    if s == 0.0 {
        return Ok(Matrix3::identity());
    }
    if s == 1.0 {
        return Ok(*g);
    }
    let (vals, vecs) = sym_eigen3(g);
    if !(vals[0] > 0.0) {
        return Err(LorentzError::Signature(format!(
            "input not positive definite (min eigenvalue {})",
            vals[0]
        )));
    }
    let powed = Matrix3::from_diagonal(&vals.map(|v| v.powf(s)));
    let out = vecs * powed * vecs.transpose();
    Ok(0.5 * (out + out.transpose()))
}

// ---------------------------------------------------------------------------
// regularity audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PointRegularity {
    pub point: SpacetimePoint,
    pub lorentzian: bool,
    /// g(n,n); NaN when the metric is singular at the point.
    pub lapse2: f64,
    /// Smallest eigenvalue of the spatial block; NaN when unavailable.
    pub spatial_min_eig: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub points: Vec<PointRegularity>,
    /// Largest g(n,n) over the sample; regular fields keep this below zero.
    pub worst_lapse2: f64,
    /// Smallest spatial-block eigenvalue over the sample.
    pub min_spatial_eig: f64,
    pub pass: bool,
}

/// Audit Lorentzian signature, timelike normal, and spatial positivity on a
/// point sample. Per-point failures are recorded, never fatal.
pub fn check_regular<M: Metric + ?Sized>(field: &M, sample: &[SpacetimePoint]) -> RegularityReport {
    let mut points = Vec::with_capacity(sample.len());
    let mut worst_lapse2 = f64::NEG_INFINITY;
    let mut min_spatial_eig = f64::INFINITY;
    for p in sample {
        let g = field.at(p);
        let finite = g.iter().all(|c| c.is_finite());
        let lorentzian = finite && lorentzian_signature(&g);
        let (lapse2, spatial_min_eig) = if finite {
            match block_decompose(&g) {
                Ok(b) => {
                    let (vals, _) = sym_eigen3(&b.spatial);
                    (b.lapse2, vals[0])
                }
                Err(LorentzError::NotGloballyHyperbolicHere { lapse2 }) => (lapse2, f64::NAN),
                Err(_) => (f64::NAN, f64::NAN),
            }
        } else {
            (f64::NAN, f64::NAN)
        };
        let pass = lorentzian && lapse2 < 0.0 && spatial_min_eig > 0.0;
        if lapse2.is_finite() {
            worst_lapse2 = worst_lapse2.max(lapse2);
        } else {
            worst_lapse2 = f64::INFINITY;
        }
        if spatial_min_eig.is_finite() {
            min_spatial_eig = min_spatial_eig.min(spatial_min_eig);
        } else {
            min_spatial_eig = f64::NEG_INFINITY;
        }
        points.push(PointRegularity { point: *p, lorentzian, lapse2, spatial_min_eig, pass });
    }
    let pass = !points.is_empty() && points.iter().all(|p| p.pass);
    RegularityReport { points, worst_lapse2, min_spatial_eig, pass }
}

//! Builtin analytic metric families and the evaluator interface shared with
//! derived metrics (interpolated, pulled back to a chart).
//!
//! Families, all diagonal in the global coordinates:
//!  - `minkowski`: diag(-1, 1, 1, 1).
//!  - `diag_poly`: diag(P0, P1, P2, P3) with each P a polynomial in (t, x1),
//!    coefficient matrices c[i][j] multiplying t^i x1^j.
//!  - `frw`: diag(-1, a^2, a^2, a^2) with a(t) = 1 + eps * shape(t).
//!  - `weakfield`: diag(-(1+2 Phi), (1-2 Phi) I3) with a static Gaussian
//!    potential Phi(x) = amplitude * exp(-|x|^2 / width^2).

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lorentz::SpacetimePoint;

/// Default step for finite-difference metric derivatives.
pub const FD_H_DEFAULT: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric spec invalid: {0}")]
    Schema(String),
    #[error("metric evaluation failed at {point:?}: {reason}")]
    Evaluation { point: [f64; 4], reason: String },
}

/// A spacetime metric evaluator on the global chart.
///
/// `at` is total: implementations signal invalid points through non-finite
/// entries, which downstream checks catch. The checked entry point with a
/// proper error is [`evaluate_metric`].
pub trait Metric {
    fn at(&self, p: &SpacetimePoint) -> Matrix4<f64>;

    /// d g / d x^axis. Default is a central difference; the builtin families
    /// override it with exact derivatives.
    fn partial(&self, p: &SpacetimePoint, axis: usize) -> Matrix4<f64> {
        let plus = self.at(&p.shifted(axis, FD_H_DEFAULT));
        let minus = self.at(&p.shifted(axis, -FD_H_DEFAULT));
        (plus - minus) / (2.0 * FD_H_DEFAULT)
    }

    /// True when the components depend on t only; grid solvers then evaluate
    /// once per time slice instead of once per point.
    fn spatially_uniform(&self) -> bool {
        false
    }
}

/// Symmetry / finiteness checked evaluation; symmetrizes the output.
pub fn evaluate_metric<M: Metric + ?Sized>(
    field: &M,
    p: &SpacetimePoint,
) -> Result<Matrix4<f64>, MetricError> {
    let g = field.at(p);
    if !g.iter().all(|c| c.is_finite()) {
        return Err(MetricError::Evaluation {
            point: p.coords(),
            reason: "non-finite components".into(),
        });
    }
    let scale = g.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let asym = (g - g.transpose()).iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if asym > 1e-14 * (1.0 + scale) {
        return Err(MetricError::Evaluation {
            point: p.coords(),
            reason: format!("asymmetric components (defect {asym})"),
        });
    }
    Ok(0.5 * (g + g.transpose()))
}

// ---------------------------------------------------------------------------
// family parameters
// ---------------------------------------------------------------------------

/// Polynomial in (t, x1): sum over c[i][j] * t^i * x1^j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly2(pub Vec<Vec<f64>>);

impl Poly2 {
    pub fn constant(c: f64) -> Self {
        Self(vec![vec![c]])
    }

    pub fn eval(&self, t: f64, x1: f64) -> f64 {
        let mut acc = 0.0;
        let mut tp = 1.0;
        for row in &self.0 {
            let mut xp = 1.0;
            for &c in row {
                acc += c * tp * xp;
                xp *= x1;
            }
            tp *= t;
        }
        acc
    }

    pub fn d_dt(&self, t: f64, x1: f64) -> f64 {
        let mut acc = 0.0;
        let mut tp = 1.0;
        for (i, row) in self.0.iter().enumerate().skip(1) {
            let mut xp = 1.0;
            for &c in row {
                acc += (i as f64) * c * tp * xp;
                xp *= x1;
            }
            tp *= t;
        }
        acc
    }

    pub fn d_dx1(&self, t: f64, x1: f64) -> f64 {
        let mut acc = 0.0;
        let mut tp = 1.0;
        for row in &self.0 {
            let mut xp = 1.0;
            for (j, &c) in row.iter().enumerate().skip(1) {
                acc += (j as f64) * c * tp * xp;
                xp *= x1;
            }
            tp *= t;
        }
        acc
    }
}

/// Named smooth profile used by the frw scale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeFn {
    Const,
    Gauss { center: f64, width: f64 },
    Tanh { center: f64, width: f64 },
}

impl ShapeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ShapeFn::Const => 1.0,
            ShapeFn::Gauss { center, width } => {
                let u = (t - center) / width;
                (-u * u).exp()
            }
            ShapeFn::Tanh { center, width } => 0.5 * (1.0 + ((t - center) / width).tanh()),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            ShapeFn::Const => 0.0,
            ShapeFn::Gauss { center, width } => {
                let u = (t - center) / width;
                -2.0 * u / width * (-u * u).exp()
            }
            ShapeFn::Tanh { center, width } => {
                let u = (t - center) / width;
                0.5 / (width * u.cosh().powi(2))
            }
        }
    }

    fn validate(&self) -> Result<(), MetricError> {
        match self {
            ShapeFn::Const => Ok(()),
            ShapeFn::Gauss { width, .. } | ShapeFn::Tanh { width, .. } => {
                if *width > 0.0 && width.is_finite() {
                    Ok(())
                } else {
                    Err(MetricError::Schema(format!("shape width must be positive, got {width}")))
                }
            }
        }
    }
}

/// The builtin families. JSON schema: `{ "family": ..., "params": {...} }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricField {
    Minkowski,
    DiagPoly { coeffs: [Poly2; 4] },
    Frw { eps: f64, shape: ShapeFn },
    #[serde(rename = "weakfield")]
    WeakField { amplitude: f64, width: f64 },
}

impl MetricField {
    /// Constant diagonal metric as a degenerate diag_poly.
    pub fn constant_diag(d: [f64; 4]) -> Self {
        MetricField::DiagPoly {
            coeffs: [
                Poly2::constant(d[0]),
                Poly2::constant(d[1]),
                Poly2::constant(d[2]),
                Poly2::constant(d[3]),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        match self {
            MetricField::Minkowski => Ok(()),
            MetricField::DiagPoly { coeffs } => {
                for p in coeffs {
                    if p.0.is_empty() || p.0.iter().any(|row| row.iter().any(|c| !c.is_finite())) {
                        return Err(MetricError::Schema(
                            "diag_poly coefficients must be nonempty and finite".into(),
                        ));
                    }
                }
                Ok(())
            }
            MetricField::Frw { eps, shape } => {
                if !eps.is_finite() {
                    return Err(MetricError::Schema("frw eps must be finite".into()));
                }
                shape.validate()
            }
            MetricField::WeakField { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(MetricError::Schema("weakfield amplitude must be finite".into()));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(MetricError::Schema(format!(
                        "weakfield width must be positive, got {width}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Scale factor of the frw family; 1 for the others.
    pub fn frw_scale(&self, t: f64) -> f64 {
        match self {
            MetricField::Frw { eps, shape } => 1.0 + eps * shape.eval(t),
            _ => 1.0,
        }
    }

    fn weakfield_potential(amplitude: f64, width: f64, x: &[f64; 3]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        amplitude * (-r2 / (width * width)).exp()
    }
}

impl Metric for MetricField {
    fn at(&self, p: &SpacetimePoint) -> Matrix4<f64> {
        match self {
            MetricField::Minkowski => crate::lorentz::minkowski(),
            MetricField::DiagPoly { coeffs } => Matrix4::from_diagonal(&Vector4::new(
                coeffs[0].eval(p.t, p.x[0]),
                coeffs[1].eval(p.t, p.x[0]),
                coeffs[2].eval(p.t, p.x[0]),
                coeffs[3].eval(p.t, p.x[0]),
            )),
            MetricField::Frw { eps, shape } => {
                let a = 1.0 + eps * shape.eval(p.t);
                let a2 = a * a;
                Matrix4::from_diagonal(&Vector4::new(-1.0, a2, a2, a2))
            }
            MetricField::WeakField { amplitude, width } => {
                let phi = Self::weakfield_potential(*amplitude, *width, &p.x);
                Matrix4::from_diagonal(&Vector4::new(
                    -(1.0 + 2.0 * phi),
                    1.0 - 2.0 * phi,
                    1.0 - 2.0 * phi,
                    1.0 - 2.0 * phi,
                ))
            }
        }
    }

    fn partial(&self, p: &SpacetimePoint, axis: usize) -> Matrix4<f64> {
        match self {
            MetricField::Minkowski => Matrix4::zeros(),
            MetricField::DiagPoly { coeffs } => match axis {
                0 => Matrix4::from_diagonal(&Vector4::new(
                    coeffs[0].d_dt(p.t, p.x[0]),
                    coeffs[1].d_dt(p.t, p.x[0]),
                    coeffs[2].d_dt(p.t, p.x[0]),
                    coeffs[3].d_dt(p.t, p.x[0]),
                )),
                1 => Matrix4::from_diagonal(&Vector4::new(
                    coeffs[0].d_dx1(p.t, p.x[0]),
                    coeffs[1].d_dx1(p.t, p.x[0]),
                    coeffs[2].d_dx1(p.t, p.x[0]),
                    coeffs[3].d_dx1(p.t, p.x[0]),
                )),
                _ => Matrix4::zeros(),
            },
            MetricField::Frw { eps, shape } => {
                if axis == 0 {
                    let a = 1.0 + eps * shape.eval(p.t);
                    let da = eps * shape.deriv(p.t);
                    let d = 2.0 * a * da;
                    Matrix4::from_diagonal(&Vector4::new(0.0, d, d, d))
                } else {
                    Matrix4::zeros()
                }
            }
            MetricField::WeakField { amplitude, width } => {
                if axis == 0 {
                    Matrix4::zeros()
                } else {
                    let phi = Self::weakfield_potential(*amplitude, *width, &p.x);
                    let dphi = phi * (-2.0 * p.x[axis - 1] / (width * width));
                    Matrix4::from_diagonal(&Vector4::new(
                        -2.0 * dphi,
                        -2.0 * dphi,
                        -2.0 * dphi,
                        -2.0 * dphi,
                    ))
                }
            }
        }
    }

    fn spatially_uniform(&self) -> bool {
        matches!(self, MetricField::Minkowski | MetricField::Frw { .. })
    }
}

pub fn metric_from_json(s: &str) -> Result<MetricField, MetricError> {
    let field: MetricField =
        serde_json::from_str(s).map_err(|e| MetricError::Schema(e.to_string()))?;
    field.validate()?;
    Ok(field)
}

pub fn metric_from_file(path: &std::path::Path) -> Result<MetricField, MetricError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MetricError::Schema(format!("{}: {e}", path.display())))?;
    metric_from_json(&text).map_err(|e| match e {
        MetricError::Schema(msg) => MetricError::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

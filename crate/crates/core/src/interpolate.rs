//! Interpolation from the Minkowski metric to an arbitrary regular metric
//! across a time window [t1, t2].
//!
//! With f the smooth transition (exactly 0 before t1, exactly 1 after t2),
//! the deformed time leg is m = sgn(a0) |a0|^f E0 + f (a1 E1 + a2 E2 + a3 E3)
//! where a are the components of n = (g^{-1})^{.0}, and the interpolated
//! metric is diag(-(-g(n,n))^f, G^f) in the basis {m, E1, E2, E3}, carried
//! back to coordinates by congruence with the inverse frame matrix. Before t1
//! this is the Minkowski matrix identically; after t2 it reproduces g.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;
use thiserror::Error;

use crate::lorentz::{
    block_decompose, lorentzian_signature, minkowski, normal_vector, spd_power, FrameBasis,
    LorentzError, SpacetimePoint,
};
use crate::metric::{evaluate_metric, Metric, MetricError};

/// Endpoint reconstruction tolerance: |g' - g| for t >= t2.
pub const TAIL_TOL: f64 = 1e-12;
/// Slope continuity tolerance across the window edges.
pub const C1_TOL: f64 = 1e-4;
/// Finite-difference step for the slope continuity check.
pub const C1_FD_H: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum InterpolateError {
    #[error("window invalid: need t1 < t2, got [{t1}, {t2}]")]
    Config { t1: f64, t2: f64 },
    #[error("deformed frame degenerate: a0 = 0")]
    DegenerateFrame,
    #[error("interpolated metric lost Lorentzian signature at {point:?}")]
    InterpolationSignature { point: [f64; 4] },
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Smooth step, exactly 0 for t <= t1 and exactly 1 for t >= t2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionFunction {
    pub t1: f64,
    pub t2: f64,
}

fn bump(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

impl TransitionFunction {
    pub fn new(t1: f64, t2: f64) -> Result<Self, InterpolateError> {
        if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
            return Err(InterpolateError::Config { t1, t2 });
        }
        Ok(Self { t1, t2 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let u = (t - self.t1) / (self.t2 - self.t1);
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let s = bump(u);
        s / (s + bump(1.0 - u))
    }
}

/// m = sgn(a0) |a0|^f E0 + f (a1, a2, a3). The time component never vanishes
/// while a0 != 0, so {m, E1, E2, E3} stays a basis.
pub fn deform_frame(a: &Vector4<f64>, f: f64) -> Result<Vector4<f64>, InterpolateError> {
    if a[0] == 0.0 {
        return Err(InterpolateError::DegenerateFrame);
    }
    Ok(Vector4::new(
        a[0].signum() * a[0].abs().powf(f),
        f * a[1],
        f * a[2],
        f * a[3],
    ))
}

/// The interpolated metric at p.
pub fn interpolated_metric_at<M: Metric + ?Sized>(
    base: &M,
    tf: &TransitionFunction,
    p: &SpacetimePoint,
) -> Result<Matrix4<f64>, InterpolateError> {
    let f = tf.eval(p.t);
    if f == 0.0 {
        // Flat era: the construction yields the Minkowski matrix identically.
        return Ok(minkowski());
    }
    let g = evaluate_metric(base, p)?;
    let n = normal_vector(&g)?;
    let block = block_decompose(&g)?;
    let m = deform_frame(&n, f)?;
    let frame = FrameBasis::with_time_leg(&m)?;
    let frame_inv = frame.inverse()?;
    let mut in_frame = Matrix4::zeros();
    in_frame[(0, 0)] = -(-block.lapse2).powf(f);
    let spatial_pow = spd_power(&block.spatial, f)?;
    for i in 0..3 {
        for j in 0..3 {
            in_frame[(i + 1, j + 1)] = spatial_pow[(i, j)];
        }
    }
    let out = frame_inv.transpose() * in_frame * frame_inv;
    let out = 0.5 * (out + out.transpose());
    if !lorentzian_signature(&out) {
        return Err(InterpolateError::InterpolationSignature { point: p.coords() });
    }
    Ok(out)
}

/// The interpolated metric as a field; evaluation failures surface as NaN
/// matrices which downstream finiteness checks catch.
#[derive(Debug, Clone)]
pub struct InterpolatedMetric<M: Metric> {
    pub base: M,
    pub transition: TransitionFunction,
}

impl<M: Metric> InterpolatedMetric<M> {
    pub fn new(base: M, transition: TransitionFunction) -> Self {
        Self { base, transition }
    }
}

impl<M: Metric> Metric for InterpolatedMetric<M> {
    fn at(&self, p: &SpacetimePoint) -> Matrix4<f64> {
        match interpolated_metric_at(&self.base, &self.transition, p) {
            Ok(g) => g,
            Err(_) => Matrix4::from_element(f64::NAN),
        }
    }

    fn spatially_uniform(&self) -> bool {
        self.base.spatially_uniform()
    }
}

// ---------------------------------------------------------------------------
// lattice verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub f: f64,
    pub diag: [f64; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationCheck {
    /// All t <= t1 samples equal the Minkowski matrix bit for bit.
    pub flat_exact: bool,
    /// max |g' - g| over t >= t2 samples.
    pub tail_defect: f64,
    pub signature_ok: bool,
    /// Slope jump across t1/t2: one-sided difference estimates of the time
    /// derivative from each side of the edge, compared at step C1_FD_H.
    pub c1_defect: f64,
    pub pass: bool,
    /// g' diagonal along the t-line at the first spatial sample.
    pub series: Vec<SeriesRow>,
}

/// Check endpoint exactness, signature, and C1 gluing on a sample lattice
/// of times crossed with spatial points.
pub fn verify_interpolation<M: Metric + ?Sized>(
    base: &M,
    tf: &TransitionFunction,
    times: &[f64],
    spatial: &[[f64; 3]],
) -> Result<InterpolationCheck, InterpolateError> {
    let spatial: Vec<[f64; 3]> =
        if spatial.is_empty() { vec![[0.0; 3]] } else { spatial.to_vec() };
    let eta = minkowski();
    let mut flat_exact = true;
    let mut tail_defect = 0.0f64;
    let mut signature_ok = true;
    let mut series = Vec::new();
    for &t in times {
        for (si, xs) in spatial.iter().enumerate() {
            let p = SpacetimePoint { t, x: *xs };
            let gp = interpolated_metric_at(base, tf, &p)?;
            if t <= tf.t1 {
                let bits_equal = gp
                    .iter()
                    .zip(eta.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                flat_exact &= bits_equal;
            }
            if t >= tf.t2 {
                let g = evaluate_metric(base, &p)?;
                tail_defect =
                    tail_defect.max((gp - g).iter().fold(0.0f64, |m, c| m.max(c.abs())));
            }
            signature_ok &= lorentzian_signature(&gp);
            if si == 0 {
                series.push(SeriesRow {
                    t,
                    f: tf.eval(t),
                    diag: [gp[(0, 0)], gp[(1, 1)], gp[(2, 2)], gp[(3, 3)]],
                });
            }
        }
    }
    let mut c1_defect = 0.0f64;
    for &edge in &[tf.t1, tf.t2] {
        for xs in &spatial {
            let g_at = |t: f64| -> Result<Matrix4<f64>, InterpolateError> {
                interpolated_metric_at(base, tf, &SpacetimePoint { t, x: *xs })
            };
            let h = C1_FD_H;
            // Second-order one-sided slope estimates meeting at the edge. Their
            // mismatch is O(h^2) for a C1 glue but O(1) for a genuine kink;
            // a plain centered-slope comparison at edge +- h would instead
            // report the base metric's own curvature (~ 2h g'') as a defect.
            let from_left =
                (3.0 * g_at(edge)? - 4.0 * g_at(edge - h)? + g_at(edge - 2.0 * h)?) / (2.0 * h);
            let from_right =
                (-3.0 * g_at(edge)? + 4.0 * g_at(edge + h)? - g_at(edge + 2.0 * h)?) / (2.0 * h);
            c1_defect = c1_defect
                .max((from_left - from_right).iter().fold(0.0f64, |m, c| m.max(c.abs())));
        }
    }
    let pass = flat_exact && tail_defect <= TAIL_TOL && signature_ok && c1_defect <= C1_TOL;
    Ok(InterpolationCheck { flat_exact, tail_defect, signature_ok, c1_defect, pass, series })
}

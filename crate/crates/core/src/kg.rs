//! Covariant Klein-Gordon solver on diagonal metrics, with the conserved
//! field inner product on constant-t slices.
//!
//! The wave operator (1/sqrt|g|) d_mu (sqrt|g| g^{mu nu} d_nu phi) = m^2 phi
//! is solved for d_t^2 phi. For diagonal g with w = sqrt(-g00 g11 g22 g33)
//! and A_i = w / g_ii this reads
//!
//!   d_t^2 phi = g00 m^2 phi - (g00/w) sum_i d_i(A_i d_i phi)
//!             - (g00/w) d_t(w g^{00}) pi
//!
//! discretized with conservative half-point central stencils in space and a
//! classical fourth-order one-step method in time. The slice inner product
//! uses the unit future normal and the induced volume density; its reduction
//! is a fixed-order pairwise tree so results are reproducible bit for bit.

use nalgebra::Matrix4;
use num_complex::Complex64;
use thiserror::Error;

use crate::lorentz::SpacetimePoint;
use crate::metric::{Metric, MetricError};

/// Default Courant factor: dt <= CFL_DEFAULT * (2 extent / n).
pub const CFL_DEFAULT: f64 = 0.25;
/// Minimum points per axis.
pub const MIN_POINTS: usize = 16;

const DIAG_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("grid rejected: {0}")]
    Grid(String),
    #[error("time step {dt} exceeds stability limit {limit}")]
    Stability { dt: f64, limit: f64 },
    #[error("field blew up during evolution near t = {t}")]
    Blowup { t: f64 },
    #[error("metric is not diagonal on the grid at {point:?}")]
    NonDiagonalMetric { point: [f64; 4] },
    #[error("metric invalid on slice t = {t}: {reason}")]
    InvalidSlice { t: f64, reason: String },
    #[error("states are not on the same slice: {reason}")]
    SliceMismatch { reason: String },
    #[error("bad parameter: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Periodic spatial grid: `n` points per axis on [-extent, extent), with
/// `dim` axes actively varying (fields are constant along suppressed axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub extent: f64,
    pub n: usize,
    pub dim: usize,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(extent: f64, n: usize, dim: usize, dt: f64) -> Result<Self, KgError> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(KgError::Grid(format!("extent must be positive, got {extent}")));
        }
        if n < MIN_POINTS {
            return Err(KgError::Grid(format!("need at least {MIN_POINTS} points per axis, got {n}")));
        }
        if dim != 1 && dim != 3 {
            return Err(KgError::Grid(format!("dim must be 1 or 3, got {dim}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(KgError::Grid(format!("dt must be positive, got {dt}")));
        }
        let spec = Self { extent, n, dim, dt };
        let limit = CFL_DEFAULT * spec.h();
        if dt > limit {
            return Err(KgError::Stability { dt, limit });
        }
        Ok(spec)
    }

    /// Grid spacing along each active axis.
    pub fn h(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// Total number of grid points.
    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Spatial coordinates of a flattened index; suppressed axes sit at 0.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.h();
        let mut x = [0.0; 3];
        match self.dim {
            1 => x[0] = -self.extent + h * idx as f64,
            _ => {
                let n = self.n;
                let i1 = idx / (n * n);
                let i2 = (idx / n) % n;
                let i3 = idx % n;
                x[0] = -self.extent + h * i1 as f64;
                x[1] = -self.extent + h * i2 as f64;
                x[2] = -self.extent + h * i3 as f64;
            }
        }
        x
    }

    pub fn point(&self, idx: usize, t: f64) -> SpacetimePoint {
        SpacetimePoint { t, x: self.coords(idx) }
    }

    /// Flattened-index stride along active axis a (0-based among x1..x3).
    fn stride(&self, axis: usize) -> usize {
        match self.dim {
            1 => 1,
            _ => self.n.pow((2 - axis) as u32),
        }
    }

    /// Neighbor indices (minus, plus) along an active axis, periodic wrap.
    fn neighbors(&self, idx: usize, axis: usize) -> (usize, usize) {
        let n = self.n;
        let s = self.stride(axis);
        let i = (idx / s) % n;
        let base = idx - i * s;
        let minus = base + ((i + n - 1) % n) * s;
        let plus = base + ((i + 1) % n) * s;
        (minus, plus)
    }
}

/// Complex scalar field and its time derivative on one constant-t slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub phi: Vec<Complex64>,
    pub pi: Vec<Complex64>,
    pub t: f64,
}

impl FieldState {
    pub fn zero(grid: &GridSpec, t: f64) -> Self {
        let len = grid.points();
        Self { phi: vec![Complex64::ZERO; len], pi: vec![Complex64::ZERO; len], t }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<(), KgError> {
        let len = grid.points();
        if self.phi.len() != len || self.pi.len() != len {
            return Err(KgError::Grid(format!(
                "state has {} phi / {} pi samples, grid wants {len}",
                self.phi.len(),
                self.pi.len()
            )));
        }
        if !self.t.is_finite()
            || self.phi.iter().chain(&self.pi).any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(KgError::Blowup { t: self.t });
        }
        Ok(())
    }

    /// Largest |phi| or |pi| sample, for blowup monitoring.
    pub fn amplitude(&self) -> f64 {
        self.phi
            .iter()
            .chain(&self.pi)
            .fold(0.0f64, |m, c| m.max(c.norm_sqr()))
            .sqrt()
    }
}

/// Fixed-order pairwise tree sum; reproducible and accurate for long slices.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 8 {
        return xs.iter().fold(Complex64::ZERO, |a, b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn diagonal_of(g: &Matrix4<f64>, point: &SpacetimePoint, t: f64) -> Result<[f64; 4], KgError> {
    if g.iter().any(|c| !c.is_finite()) {
        return Err(KgError::InvalidSlice { t, reason: format!("non-finite metric at {point:?}") });
    }
    let scale = g.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for i in 0..4 {
        for j in 0..4 {
            if i != j && g[(i, j)].abs() > DIAG_TOL * (1.0 + scale) {
                return Err(KgError::NonDiagonalMetric { point: point.coords() });
            }
        }
    }
    let d = [g[(0, 0)], g[(1, 1)], g[(2, 2)], g[(3, 3)]];
    if !(d[0] < 0.0 && d[1] > 0.0 && d[2] > 0.0 && d[3] > 0.0) {
        return Err(KgError::InvalidSlice {
            t,
            reason: format!("diagonal {d:?} is not Lorentzian at {point:?}"),
        });
    }
    Ok(d)
}

/// Per-point coefficient tables for one time slice.
struct SliceTables {
    g00: Vec<f64>,
    winv: Vec<f64>,
    /// A_i = w / g_ii along each active axis.
    axis: Vec<Vec<f64>>,
    /// d/dt (w g^{00}), from the metric's analytic or FD time partial.
    dtcoef: Vec<f64>,
}

impl SliceTables {
    fn build<M: Metric + ?Sized>(metric: &M, grid: &GridSpec, t: f64) -> Result<Self, KgError> {
        let len = grid.points();
        let uniform = metric.spatially_uniform();
        let eval_count = if uniform { 1 } else { len };
        let mut g00 = Vec::with_capacity(eval_count);
        let mut winv = Vec::with_capacity(eval_count);
        let mut axis = vec![Vec::with_capacity(eval_count); grid.dim];
        let mut dtcoef = Vec::with_capacity(eval_count);
        for idx in 0..eval_count {
            let p = grid.point(idx, t);
            let d = diagonal_of(&metric.at(&p), &p, t)?;
            let w = (-d[0] * d[1] * d[2] * d[3]).sqrt();
            let gt = metric.partial(&p, 0);
            if gt.iter().any(|c| !c.is_finite()) {
                return Err(KgError::InvalidSlice {
                    t,
                    reason: format!("non-finite time partial at {p:?}"),
                });
            }
            // d/dt (w g^00) = (w g^00 / 2) (sum_i gdot_ii/g_ii - gdot_00/g_00)
            let log_rate = gt[(1, 1)] / d[1] + gt[(2, 2)] / d[2] + gt[(3, 3)] / d[3]
                - gt[(0, 0)] / d[0];
            g00.push(d[0]);
            winv.push(1.0 / w);
            for (a, col) in axis.iter_mut().enumerate() {
                col.push(w / d[a + 1]);
            }
            dtcoef.push(0.5 * (w / d[0]) * log_rate);
        }
        if uniform && len > 1 {
            g00 = vec![g00[0]; len];
            winv = vec![winv[0]; len];
            for col in axis.iter_mut() {
                *col = vec![col[0]; len];
            }
            dtcoef = vec![dtcoef[0]; len];
        }
        Ok(Self { g00, winv, axis, dtcoef })
    }
}

fn rhs_with_tables(
    phi: &[Complex64],
    pi: &[Complex64],
    tables: &SliceTables,
    mass: f64,
    grid: &GridSpec,
    dphi: &mut [Complex64],
    dpi: &mut [Complex64],
) {
    let h2 = grid.h() * grid.h();
    let m2 = mass * mass;
    dphi.copy_from_slice(pi);
    for idx in 0..phi.len() {
        let mut flux = Complex64::ZERO;
        for a in 0..grid.dim {
            let coef = &tables.axis[a];
            let (mi, pl) = grid.neighbors(idx, a);
            let a_plus = 0.5 * (coef[idx] + coef[pl]);
            let a_minus = 0.5 * (coef[idx] + coef[mi]);
            flux += a_plus * (phi[pl] - phi[idx]) - a_minus * (phi[idx] - phi[mi]);
        }
        let s = tables.g00[idx] * tables.winv[idx];
        dpi[idx] = tables.g00[idx] * m2 * phi[idx] - s * (flux / h2)
            - s * tables.dtcoef[idx] * pi[idx];
    }
}

fn check_mass(mass: f64) -> Result<(), KgError> {
    if !(mass.is_finite() && mass >= 0.0) {
        return Err(KgError::Config(format!("mass must be finite and >= 0, got {mass}")));
    }
    Ok(())
}

/// Right-hand side (dphi, dpi) of the first-order system at the state's time.
pub fn kg_rhs<M: Metric + ?Sized>(
    state: &FieldState,
    metric: &M,
    mass: f64,
    grid: &GridSpec,
) -> Result<(Vec<Complex64>, Vec<Complex64>), KgError> {
    check_mass(mass)?;
    state.validate(grid)?;
    let tables = SliceTables::build(metric, grid, state.t)?;
    let mut dphi = vec![Complex64::ZERO; state.phi.len()];
    let mut dpi = vec![Complex64::ZERO; state.phi.len()];
    rhs_with_tables(&state.phi, &state.pi, &tables, mass, grid, &mut dphi, &mut dpi);
    Ok((dphi, dpi))
}

/// March the state to t_end with classical RK4; the step count is
/// ceil(|t_end - t| / dt) so the span divides evenly, and negative spans run
/// the same scheme backward.
pub fn evolve<M: Metric + ?Sized>(
    state: &FieldState,
    metric: &M,
    mass: f64,
    grid: &GridSpec,
    t_end: f64,
) -> Result<FieldState, KgError> {
    check_mass(mass)?;
    state.validate(grid)?;
    if !t_end.is_finite() {
        return Err(KgError::Config(format!("t_end must be finite, got {t_end}")));
    }
    let span = t_end - state.t;
    if span == 0.0 {
        return Ok(state.clone());
    }
    let steps = (span.abs() / grid.dt).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let len = grid.points();

    let mut cur = state.clone();
    let zero = vec![Complex64::ZERO; len];
    let (mut k1_phi, mut k1_pi) = (zero.clone(), zero.clone());
    let (mut k2_phi, mut k2_pi) = (zero.clone(), zero.clone());
    let (mut k3_phi, mut k3_pi) = (zero.clone(), zero.clone());
    let (mut k4_phi, mut k4_pi) = (zero.clone(), zero.clone());
    let (mut stage_phi, mut stage_pi) = (zero.clone(), zero);

    let mut tables_start = SliceTables::build(metric, grid, cur.t)?;
    for step in 0..steps {
        let t_half = state.t + dt * (step as f64 + 0.5);
        let t1 = state.t + dt * (step + 1) as f64;
        let tables_half = SliceTables::build(metric, grid, t_half)?;
        let tables_end = SliceTables::build(metric, grid, t1)?;

        rhs_with_tables(&cur.phi, &cur.pi, &tables_start, mass, grid, &mut k1_phi, &mut k1_pi);
        for i in 0..len {
            stage_phi[i] = cur.phi[i] + 0.5 * dt * k1_phi[i];
            stage_pi[i] = cur.pi[i] + 0.5 * dt * k1_pi[i];
        }
        rhs_with_tables(&stage_phi, &stage_pi, &tables_half, mass, grid, &mut k2_phi, &mut k2_pi);
        for i in 0..len {
            stage_phi[i] = cur.phi[i] + 0.5 * dt * k2_phi[i];
            stage_pi[i] = cur.pi[i] + 0.5 * dt * k2_pi[i];
        }
        rhs_with_tables(&stage_phi, &stage_pi, &tables_half, mass, grid, &mut k3_phi, &mut k3_pi);
        for i in 0..len {
            stage_phi[i] = cur.phi[i] + dt * k3_phi[i];
            stage_pi[i] = cur.pi[i] + dt * k3_pi[i];
        }
        rhs_with_tables(&stage_phi, &stage_pi, &tables_end, mass, grid, &mut k4_phi, &mut k4_pi);

        let w = dt / 6.0;
        for i in 0..len {
            cur.phi[i] += w * (k1_phi[i] + 2.0 * k2_phi[i] + 2.0 * k3_phi[i] + k4_phi[i]);
            cur.pi[i] += w * (k1_pi[i] + 2.0 * k2_pi[i] + 2.0 * k3_pi[i] + k4_pi[i]);
        }
        cur.t = t1;
        if !cur.amplitude().is_finite() {
            return Err(KgError::Blowup { t: cur.t });
        }
        tables_start = tables_end;
    }
    Ok(cur)
}

/// Conserved slice inner product
/// i sum_x (conj(f.phi) pi_h/alpha - h.phi conj(f.pi)/alpha) w_S h^dim
/// with alpha = sqrt(-g00) (so pi/alpha is the unit-normal derivative) and
/// w_S = sqrt(g11 g22 g33) the induced volume density.
pub fn kg_inner_product<M: Metric + ?Sized>(
    f: &FieldState,
    h: &FieldState,
    metric: &M,
    grid: &GridSpec,
) -> Result<Complex64, KgError> {
    f.validate(grid)?;
    h.validate(grid)?;
    if f.t != h.t {
        return Err(KgError::SliceMismatch {
            reason: format!("f at t = {}, h at t = {}", f.t, h.t),
        });
    }
    let len = grid.points();
    let uniform = metric.spatially_uniform();
    let mut terms = vec![Complex64::ZERO; len];
    let mut cached: Option<(f64, f64)> = None;
    for idx in 0..len {
        let (alpha_inv, wsig) = match cached {
            Some(pair) if uniform => pair,
            _ => {
                let p = grid.point(idx, f.t);
                let d = diagonal_of(&metric.at(&p), &p, f.t)?;
                let pair = (1.0 / (-d[0]).sqrt(), (d[1] * d[2] * d[3]).sqrt());
                cached = Some(pair);
                pair
            }
        };
        let dt_h = h.pi[idx] * alpha_inv;
        let dt_f = f.pi[idx] * alpha_inv;
        terms[idx] = (f.phi[idx].conj() * dt_h - h.phi[idx] * dt_f.conj()) * wsig;
    }
    let cell = grid.h().powi(grid.dim as i32);
    Ok(Complex64::I * pairwise_sum(&terms) * cell)
}

/// Max relative drift of <f, f> over the listed times, marching the state
/// from slice to slice. Zero-norm input returns 0 by convention.
pub fn conservation_drift<M: Metric + ?Sized>(
    initial: &FieldState,
    metric: &M,
    mass: f64,
    grid: &GridSpec,
    times: &[f64],
) -> Result<f64, KgError> {
    let norm0 = kg_inner_product(initial, initial, metric, grid)?;
    if norm0.norm() == 0.0 {
        return Ok(0.0);
    }
    let mut state = initial.clone();
    let mut drift = 0.0f64;
    for &t in times {
        state = evolve(&state, metric, mass, grid, t)?;
        let norm = kg_inner_product(&state, &state, metric, grid)?;
        drift = drift.max((norm - norm0).norm() / norm0.norm());
    }
    Ok(drift)
}

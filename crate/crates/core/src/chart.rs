//! Regular chart construction: geodesics, cube-radius search, the tan
//! rescaling onto R^4, and greedy covers of coordinate regions.
//!
//! A chart at x consists of a g-orthonormal tangent frame F (time leg
//! future-directed), a cube radius r, and the map
//!     z  ->  y = (2r/pi) atan(z)  ->  exp_x(F y)
//! from chart coordinates through the open cube (-r, r)^4 in normal
//! coordinates to the manifold. The pulled-back metric at z is
//! J^T g J with J the chain-rule Jacobian of that composite.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::lorentz::{self, lorentzian_signature, sym_eigen4, LorentzError, SpacetimePoint};
use crate::metric::Metric;

/// Finite-difference step for Jacobians of the exponential map.
const JAC_FD_H: f64 = 5e-4;
/// Fractions of r used by the standard 5^4 chart sample lattice.
pub const CHART_SAMPLE_FRACTIONS: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart configuration invalid: {0}")]
    Config(String),
    #[error("geodesic left the validity region near {0:?}")]
    DomainExit([f64; 4]),
    #[error("geodesic integration blew up near {0:?}")]
    Blowup([f64; 4]),
    #[error("no regular cube neighborhood at {at:?}: {reason}")]
    NoRegularNeighborhood { at: [f64; 4], reason: String },
    #[error("point lies outside the open cube of radius {r}")]
    OutOfCube { r: f64 },
    #[error("cover failed: {0}")]
    CoverFailure(String),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

// ---------------------------------------------------------------------------
// geodesics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChristoffelMode {
    /// Use the field's own derivative formulas (exact for builtin families).
    Analytic,
    /// Central finite differences of the metric with step h.
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicConfig {
    /// Affine-parameter step; the map integrates over [0, 1].
    pub step: f64,
    pub max_steps: usize,
    pub mode: ChristoffelMode,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self { step: 0.05, max_steps: 10_000, mode: ChristoffelMode::Analytic }
    }
}

impl GeodesicConfig {
    fn validate(&self) -> Result<usize, ChartError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ChartError::Config(format!("step must be positive, got {}", self.step)));
        }
        if let ChristoffelMode::FiniteDifference { h } = self.mode {
            if !(1e-6..=1e-3).contains(&h) {
                return Err(ChartError::Config(format!(
                    "finite-difference step {h} outside [1e-6, 1e-3]"
                )));
            }
        }
        let n_steps = (1.0 / self.step).ceil() as usize;
        if n_steps > self.max_steps {
            return Err(ChartError::Config(format!(
                "step {} needs {n_steps} steps, budget is {}",
                self.step, self.max_steps
            )));
        }
        Ok(n_steps.max(1))
    }
}

/// Christoffel symbols Gamma^mu_{alpha beta}; element `[mu][(alpha, beta)]`.
pub fn christoffels<M: Metric + ?Sized>(
    field: &M,
    p: &SpacetimePoint,
    mode: ChristoffelMode,
) -> Result<[Matrix4<f64>; 4], ChartError> {
    let g = field.at(p);
    let inv = g.try_inverse().ok_or(ChartError::DomainExit(p.coords()))?;
    let dg: [Matrix4<f64>; 4] = match mode {
        ChristoffelMode::Analytic => {
            [field.partial(p, 0), field.partial(p, 1), field.partial(p, 2), field.partial(p, 3)]
        }
        ChristoffelMode::FiniteDifference { h } => {
            let fd = |axis: usize| {
                (field.at(&p.shifted(axis, h)) - field.at(&p.shifted(axis, -h))) / (2.0 * h)
            };
            [fd(0), fd(1), fd(2), fd(3)]
        }
    };
    let mut out = [Matrix4::zeros(); 4];
    for mu in 0..4 {
        for al in 0..4 {
            for be in 0..4 {
                let mut s = 0.0;
                for nu in 0..4 {
                    s += inv[(mu, nu)] * (dg[al][(nu, be)] + dg[be][(nu, al)] - dg[nu][(al, be)]);
                }
                out[mu][(al, be)] = 0.5 * s;
            }
        }
    }
    if out.iter().any(|m| m.iter().any(|c| !c.is_finite())) {
        return Err(ChartError::Blowup(p.coords()));
    }
    Ok(out)
}

fn geodesic_rhs<M: Metric + ?Sized>(
    field: &M,
    pos: &Vector4<f64>,
    vel: &Vector4<f64>,
    mode: ChristoffelMode,
) -> Result<(Vector4<f64>, Vector4<f64>), ChartError> {
    if !pos.iter().all(|c| c.is_finite()) || !vel.iter().all(|c| c.is_finite()) {
        return Err(ChartError::Blowup([pos[0], pos[1], pos[2], pos[3]]));
    }
    let p = SpacetimePoint::from_coords([pos[0], pos[1], pos[2], pos[3]])
        .map_err(|_| ChartError::Blowup([pos[0], pos[1], pos[2], pos[3]]))?;
    let gam = christoffels(field, &p, mode)?;
    let mut acc = Vector4::zeros();
    for mu in 0..4 {
        acc[mu] = -(vel.transpose() * gam[mu] * vel)[(0, 0)];
    }
    Ok((*vel, acc))
}

fn in_validity<M: Metric + ?Sized>(field: &M, pos: &Vector4<f64>) -> bool {
    if !pos.iter().all(|c| c.is_finite()) {
        return false;
    }
    let p = SpacetimePoint { t: pos[0], x: [pos[1], pos[2], pos[3]] };
    let g = field.at(&p);
    if !g.iter().all(|c| c.is_finite()) {
        return false;
    }
    match g.try_inverse() {
        Some(inv) => inv[(0, 0)].is_finite() && inv[(0, 0)] < 0.0,
        None => false,
    }
}

/// exp_x(v): integrate the geodesic with initial velocity v over affine
/// parameter [0, 1] with classical RK4.
pub fn exponential_map<M: Metric + ?Sized>(
    field: &M,
    x: &SpacetimePoint,
    v: &Vector4<f64>,
    cfg: &GeodesicConfig,
) -> Result<SpacetimePoint, ChartError> {
    let n_steps = cfg.validate()?;
    let dl = 1.0 / n_steps as f64;
    let mut pos = x.vector();
    let mut vel = *v;
    for _ in 0..n_steps {
        let (k1p, k1v) = geodesic_rhs(field, &pos, &vel, cfg.mode)?;
        let (k2p, k2v) =
            geodesic_rhs(field, &(pos + 0.5 * dl * k1p), &(vel + 0.5 * dl * k1v), cfg.mode)?;
        let (k3p, k3v) =
            geodesic_rhs(field, &(pos + 0.5 * dl * k2p), &(vel + 0.5 * dl * k2v), cfg.mode)?;
        let (k4p, k4v) = geodesic_rhs(field, &(pos + dl * k3p), &(vel + dl * k3v), cfg.mode)?;
        pos += dl / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        vel += dl / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !pos.iter().all(|c| c.is_finite()) || !vel.iter().all(|c| c.is_finite()) {
            return Err(ChartError::Blowup([pos[0], pos[1], pos[2], pos[3]]));
        }
        if !in_validity(field, &pos) {
            return Err(ChartError::DomainExit([pos[0], pos[1], pos[2], pos[3]]));
        }
    }
    SpacetimePoint::from_coords([pos[0], pos[1], pos[2], pos[3]])
        .map_err(|_| ChartError::Blowup([pos[0], pos[1], pos[2], pos[3]]))
}

// ---------------------------------------------------------------------------
// cube radius search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RadiusConfig {
    pub r_cap: f64,
    pub tol: f64,
    /// Lattice density per axis for the cube predicate.
    pub samples_per_axis: usize,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        Self { r_cap: 1.0, tol: 1e-3, samples_per_axis: 9 }
    }
}

/// Threshold on |det[n, E1, E2, E3]| = |(g^{-1})^{00}| for frame independence.
pub const INDEPENDENCE_FLOOR: f64 = 1e-8;

fn cube_predicate<M: Metric + ?Sized>(
    field: &M,
    x: &SpacetimePoint,
    r: f64,
    samples_per_axis: usize,
) -> bool {
    let s = samples_per_axis.max(2);
    let offsets: Vec<f64> =
        (0..s).map(|k| -r + 2.0 * r * (k as f64) / ((s - 1) as f64)).collect();
    let c = x.coords();
    for &d0 in &offsets {
        for &d1 in &offsets {
            for &d2 in &offsets {
                for &d3 in &offsets {
                    let q = SpacetimePoint {
                        t: c[0] + d0,
                        x: [c[1] + d1, c[2] + d2, c[3] + d3],
                    };
                    let g = field.at(&q);
                    if !g.iter().all(|v| v.is_finite()) {
                        return false;
                    }
                    let inv = match g.try_inverse() {
                        Some(inv) => inv,
                        None => return false,
                    };
                    // det[n | E1 E2 E3] = n^0 = (g^{-1})^{00}; require the
                    // frame independent and the normal timelike.
                    if !(inv[(0, 0)] < -INDEPENDENCE_FLOOR) {
                        return false;
                    }
                    if !lorentzian_signature(&g) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Largest cube half-width (up to r_cap, bisection tolerance tol) around x on
/// which the frame conditions hold at every lattice sample.
pub fn find_cube_radius<M: Metric + ?Sized>(
    field: &M,
    x: &SpacetimePoint,
    cfg: &RadiusConfig,
) -> Result<f64, ChartError> {
    if !(cfg.r_cap > 0.0 && cfg.tol > 0.0 && cfg.tol < cfg.r_cap) {
        return Err(ChartError::Config(format!(
            "radius search needs 0 < tol < r_cap, got tol {} r_cap {}",
            cfg.tol, cfg.r_cap
        )));
    }
    if cube_predicate(field, x, cfg.r_cap, cfg.samples_per_axis) {
        return Ok(cfg.r_cap);
    }
    let mut lo = cfg.tol;
    if !cube_predicate(field, x, lo, cfg.samples_per_axis) {
        return Err(ChartError::NoRegularNeighborhood {
            at: x.coords(),
            reason: format!("cube conditions already fail at r = {lo}"),
        });
    }
    let mut hi = cfg.r_cap;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if cube_predicate(field, x, mid, cfg.samples_per_axis) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------------
// tan rescaling
// ---------------------------------------------------------------------------

/// Componentwise z_mu = tan(pi y_mu / (2 r)), open cube onto R^4.
pub fn tan_rescale(y: &Vector4<f64>, r: f64) -> Result<Vector4<f64>, ChartError> {
    if y.iter().any(|c| !(c.abs() < r)) {
        return Err(ChartError::OutOfCube { r });
    }
    Ok(y.map(|c| (std::f64::consts::PI * c / (2.0 * r)).tan()))
}

/// Inverse of [`tan_rescale`]; total on R^4.
pub fn atan_rescale(z: &Vector4<f64>, r: f64) -> Vector4<f64> {
    z.map(|c| 2.0 * r / std::f64::consts::PI * c.atan())
}

// ---------------------------------------------------------------------------
// the chart
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RegularChart {
    pub center: SpacetimePoint,
    pub r: f64,
    /// g-orthonormal frame at the center, columns F_0..F_3, F^T g F = eta,
    /// F_0 future-directed.
    pub frame: Matrix4<f64>,
    frame_inv: Matrix4<f64>,
    pub geodesics: GeodesicConfig,
}

/// Build the chart at x: cube radius by bisection, orthonormal frame from the
/// canonical eigensystem of g(x).
pub fn build_regular_chart<M: Metric + ?Sized>(
    field: &M,
    x: &SpacetimePoint,
    geo: &GeodesicConfig,
    rad: &RadiusConfig,
) -> Result<RegularChart, ChartError> {
    geo.validate()?;
    let g = crate::metric::evaluate_metric(field, x).map_err(|e| {
        ChartError::NoRegularNeighborhood { at: x.coords(), reason: e.to_string() }
    })?;
    if !lorentzian_signature(&g) {
        return Err(ChartError::NoRegularNeighborhood {
            at: x.coords(),
            reason: "metric is not Lorentzian at the center".into(),
        });
    }
    let r = find_cube_radius(field, x, rad)?;
    let (vals, vecs) = sym_eigen4(&g);
    let mut frame = Matrix4::zeros();
    for mu in 0..4 {
        let scale = 1.0 / vals[mu].abs().sqrt();
        frame.set_column(mu, &(vecs.column(mu) * scale));
    }
    if frame[(0, 0)] < 0.0 {
        let neg = -frame.column(0).into_owned();
        frame.set_column(0, &neg);
    }
    let frame_inv = frame.try_inverse().ok_or(LorentzError::DegenerateFrame {
        det: frame.determinant(),
    })?;
    Ok(RegularChart { center: *x, r, frame, frame_inv, geodesics: *geo })
}

impl RegularChart {
    /// exp_center(F y) for y in the open cube.
    pub fn normal_to_manifold<M: Metric + ?Sized>(
        &self,
        field: &M,
        y: &Vector4<f64>,
    ) -> Result<SpacetimePoint, ChartError> {
        if y.iter().all(|c| *c == 0.0) {
            return Ok(self.center);
        }
        exponential_map(field, &self.center, &(self.frame * y), &self.geodesics)
    }

    pub fn chart_to_manifold<M: Metric + ?Sized>(
        &self,
        field: &M,
        z: &Vector4<f64>,
    ) -> Result<SpacetimePoint, ChartError> {
        let y = atan_rescale(z, self.r);
        self.normal_to_manifold(field, &y)
    }

    /// Point and Jacobian of y -> exp_center(F y). At the cube center the
    /// Jacobian is the frame itself (d exp at the origin is the identity).
    pub fn exp_jacobian<M: Metric + ?Sized>(
        &self,
        field: &M,
        y: &Vector4<f64>,
    ) -> Result<(SpacetimePoint, Matrix4<f64>), ChartError> {
        let base = self.normal_to_manifold(field, y)?;
        if y.iter().all(|c| *c == 0.0) {
            return Ok((base, self.frame));
        }
        let mut jac = Matrix4::zeros();
        for axis in 0..4 {
            let mut yp = *y;
            let mut ym = *y;
            yp[axis] += JAC_FD_H;
            ym[axis] -= JAC_FD_H;
            let fp = self.normal_to_manifold(field, &yp)?.vector();
            let fm = self.normal_to_manifold(field, &ym)?.vector();
            jac.set_column(axis, &((fp - fm) / (2.0 * JAC_FD_H)));
        }
        Ok((base, jac))
    }

    /// Pulled-back metric at chart coordinates z.
    pub fn pulled_metric_at<M: Metric + ?Sized>(
        &self,
        field: &M,
        z: &Vector4<f64>,
    ) -> Result<Matrix4<f64>, ChartError> {
        let y = atan_rescale(z, self.r);
        let (q, jt) = self.exp_jacobian(field, &y)?;
        let scale = 2.0 * self.r / std::f64::consts::PI;
        let atan_jac = Matrix4::from_diagonal(&z.map(|c| scale / (1.0 + c * c)));
        let j = jt * atan_jac;
        let g = field.at(&q);
        let out = j.transpose() * g * j;
        Ok(0.5 * (out + out.transpose()))
    }

    /// Constant conformal factor relating the chart metric at z = 0 to the
    /// Minkowski matrix: g_chart(0) = (2r/pi)^2 eta for an exact frame.
    pub fn origin_scale(&self) -> f64 {
        let s = 2.0 * self.r / std::f64::consts::PI;
        s * s
    }

    /// Max-norm defect of g_chart(0) / origin_scale against eta.
    pub fn origin_defect<M: Metric + ?Sized>(&self, field: &M) -> Result<f64, ChartError> {
        let g0 = self.pulled_metric_at(field, &Vector4::zeros())?;
        let normalized = g0 / self.origin_scale();
        Ok((normalized - lorentz::minkowski())
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs())))
    }

    /// The standard 5^4 sample lattice in chart coordinates.
    pub fn sample_lattice(&self) -> Vec<Vector4<f64>> {
        let mut out = Vec::with_capacity(CHART_SAMPLE_FRACTIONS.len().pow(4));
        for &f0 in &CHART_SAMPLE_FRACTIONS {
            for &f1 in &CHART_SAMPLE_FRACTIONS {
                for &f2 in &CHART_SAMPLE_FRACTIONS {
                    for &f3 in &CHART_SAMPLE_FRACTIONS {
                        let y = Vector4::new(f0, f1, f2, f3) * self.r;
                        // Safe: |fractions| < 1 keeps y inside the open cube.
                        out.push(tan_rescale(&y, self.r).expect("sample inside cube"));
                    }
                }
            }
        }
        out
    }

    /// Invert the chart map by Newton iteration on y -> exp_center(F y).
    /// Returns None when the iteration leaves the chart or fails to converge.
    pub fn manifold_to_normal<M: Metric + ?Sized>(
        &self,
        field: &M,
        q: &SpacetimePoint,
        tol: f64,
        max_iter: usize,
    ) -> Option<Vector4<f64>> {
        let target = q.vector();
        let mut y = self.frame_inv * (target - self.center.vector());
        for _ in 0..max_iter {
            if !y.iter().all(|c| c.is_finite()) || y.amax() > 4.0 * self.r {
                return None;
            }
            let (pos, jac) = self.exp_jacobian(field, &y).ok()?;
            let resid = target - pos.vector();
            if resid.amax() < tol {
                return Some(y);
            }
            let dy = jac.try_inverse()? * resid;
            y += dy;
        }
        None
    }

    /// True when q's preimage lies in the open cube.
    pub fn covers<M: Metric + ?Sized>(&self, field: &M, q: &SpacetimePoint) -> bool {
        match self.manifold_to_normal(field, q, 1e-9, 25) {
            Some(y) => y.amax() < self.r,
            None => false,
        }
    }

    /// Chart metric as a metric field on R^4 (chart coordinates).
    pub fn chart_metric<'a, M: Metric + ?Sized>(&'a self, field: &'a M) -> ChartMetric<'a, M> {
        ChartMetric { chart: self, field }
    }
}

/// The pulled-back metric viewed as a field on chart coordinates.
pub struct ChartMetric<'a, M: Metric + ?Sized> {
    chart: &'a RegularChart,
    field: &'a M,
}

impl<M: Metric + ?Sized> Metric for ChartMetric<'_, M> {
    fn at(&self, p: &SpacetimePoint) -> Matrix4<f64> {
        match self.chart.pulled_metric_at(self.field, &p.vector()) {
            Ok(g) => g,
            Err(_) => Matrix4::from_element(f64::NAN),
        }
    }
}

// ---------------------------------------------------------------------------
// region covers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Region4 {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Region4 {
    pub fn center(&self) -> SpacetimePoint {
        let c: Vec<f64> = (0..4).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect();
        SpacetimePoint { t: c[0], x: [c[1], c[2], c[3]] }
    }

    pub fn lattice(&self, per_axis: usize) -> Vec<SpacetimePoint> {
        let s = per_axis.max(2);
        let axis = |i: usize| -> Vec<f64> {
            (0..s)
                .map(|k| self.lo[i] + (self.hi[i] - self.lo[i]) * (k as f64) / ((s - 1) as f64))
                .collect()
        };
        let (a0, a1, a2, a3) = (axis(0), axis(1), axis(2), axis(3));
        let mut out = Vec::with_capacity(s.pow(4));
        for &t in &a0 {
            for &x1 in &a1 {
                for &x2 in &a2 {
                    for &x3 in &a3 {
                        out.push(SpacetimePoint { t, x: [x1, x2, x3] });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoverConfig {
    pub lattice_per_axis: usize,
    pub max_charts: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self { lattice_per_axis: 5, max_charts: 256 }
    }
}

#[derive(Debug)]
pub struct ChartCover {
    pub charts: Vec<RegularChart>,
    pub lattice: Vec<SpacetimePoint>,
    /// Index of the first chart covering each lattice point.
    pub owner: Vec<Option<usize>>,
}

impl ChartCover {
    pub fn coverage_fraction(&self) -> f64 {
        if self.lattice.is_empty() {
            return 1.0;
        }
        self.owner.iter().filter(|o| o.is_some()).count() as f64 / self.lattice.len() as f64
    }
}

/// Greedy cover: seed at the region center, then repeatedly chart the
/// uncovered lattice point nearest the centroid of the uncovered set.
pub fn cover_region<M: Metric + ?Sized>(
    field: &M,
    region: &Region4,
    geo: &GeodesicConfig,
    rad: &RadiusConfig,
    cover: &CoverConfig,
) -> Result<ChartCover, ChartError> {
    for i in 0..4 {
        if !(region.lo[i] <= region.hi[i]) {
            return Err(ChartError::Config(format!(
                "region axis {i} has lo {} > hi {}",
                region.lo[i], region.hi[i]
            )));
        }
    }
    let lattice = region.lattice(cover.lattice_per_axis);
    let mut owner: Vec<Option<usize>> = vec![None; lattice.len()];
    let mut charts: Vec<RegularChart> = Vec::new();
    let mut seed = region.center();
    loop {
        let chart = build_regular_chart(field, &seed, geo, rad).map_err(|e| {
            ChartError::CoverFailure(format!("chart at {:?} failed: {e}", seed.coords()))
        })?;
        let idx = charts.len();
        for (i, q) in lattice.iter().enumerate() {
            if owner[i].is_none() && chart.covers(field, q) {
                owner[i] = Some(idx);
            }
        }
        charts.push(chart);
        let uncovered: Vec<usize> =
            (0..lattice.len()).filter(|&i| owner[i].is_none()).collect();
        if uncovered.is_empty() {
            break;
        }
        if charts.len() >= cover.max_charts {
            return Err(ChartError::CoverFailure(format!(
                "{} points uncovered after {} charts",
                uncovered.len(),
                charts.len()
            )));
        }
        let mut centroid = Vector4::zeros();
        for &i in &uncovered {
            centroid += lattice[i].vector();
        }
        centroid /= uncovered.len() as f64;
        let next = uncovered
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (lattice[a].vector() - centroid).norm();
                let db = (lattice[b].vector() - centroid).norm();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            })
            .expect("nonempty uncovered set");
        let next_seed = lattice[next];
        if charts.iter().any(|c| c.center == next_seed) {
            return Err(ChartError::CoverFailure(format!(
                "seed {:?} repeats without covering its point",
                next_seed.coords()
            )));
        }
        seed = next_seed;
    }
    Ok(ChartCover { charts, lattice, owner })
}

//! The mass shell { (p0, p) : p0^2 - p^2 = m^2, p0 > 0 }, its measure
//! d^3p / sqrt(m^2 + p^2), the weight-cancelling multiplier transform from
//! plain momentum space, and the synthesis map onto positive-frequency
//! solutions sampled on a periodic spatial grid.
//!
//! Momenta live on the grid-dual lattice p = j pi / L so every synthesized
//! plane wave is exactly periodic and distinct modes are exactly orthogonal
//! under the discrete slice inner product. With the synthesis constant
//! c = 1 / sqrt(2 V dp^dim) the chain lattice-L2 -> shell -> field norm is
//! an isometry up to roundoff.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{FieldState, GridSpec};

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("momentum lattice problem: {0}")]
    Lattice(String),
    #[error("bad parameter: {0}")]
    Config(String),
}

/// Lift a 3-momentum onto the shell: (sqrt(m^2 + p^2), p).
pub fn shell_embed(p: [f64; 3], m: f64) -> [f64; 4] {
    let e = (m * m + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [e, p[0], p[1], p[2]]
}

// ---------------------------------------------------------------------------
// shell measure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentumRegion {
    /// Axis-aligned box [lo, hi] in momentum space.
    Box { lo: [f64; 3], hi: [f64; 3] },
    /// Centered ball, integrated in the radial form.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-8, max_depth: 30 }
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, len: f64) -> f64 {
    len / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: FnMut(f64) -> Result<f64, ShellError>>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, ShellError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(ShellError::Quadrature(format!(
            "tolerance {tol:e} not reached on [{a}, {b}]"
        )));
    }
    let l = adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

fn integrate<F: FnMut(f64) -> Result<f64, ShellError>>(
    mut f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<f64, ShellError> {
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    let whole = simpson(fa, fm, fb, b - a);
    adapt(&mut f, a, b, fa, fm, fb, whole, spec.abs_tol, spec.max_depth)
}

/// Measure of the region lifted to the shell: integral of 1/sqrt(m^2 + |p|^2)
/// over the region, by nested (box) or radial (ball) adaptive quadrature.
pub fn shell_measure(
    region: &MomentumRegion,
    m: f64,
    spec: &QuadratureSpec,
) -> Result<f64, ShellError> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(ShellError::Config(format!("mass must be finite and >= 0, got {m}")));
    }
    match region {
        MomentumRegion::Ball { radius } => {
            if *radius <= 0.0 {
                return Ok(0.0);
            }
            // 4 pi r^2 / sqrt(m^2 + r^2); at m = 0 this is the exact 4 pi r,
            // with the removable 0/0 at the origin sent to its limit 0.
            integrate(
                |r| {
                    let d2 = m * m + r * r;
                    Ok(if d2 == 0.0 { 0.0 } else { 4.0 * std::f64::consts::PI * r * r / d2.sqrt() })
                },
                0.0,
                *radius,
                spec,
            )
        }
        MomentumRegion::Box { lo, hi } => {
            if lo.iter().zip(hi).any(|(l, h)| l >= h) {
                return Ok(0.0);
            }
            // The z line integrates in closed form, asinh(z/c) with
            // c^2 = m^2 + x^2 + y^2, so only two adaptive layers remain. The
            // middle one runs two decades tighter than the outer: its
            // acceptance jitter is what the outer integrand looks like at
            // small scales, and it has to sit below the outer tolerance.
            let strip = move |x: f64, y: f64| -> f64 {
                let c = (m * m + x * x + y * y).sqrt();
                if c == 0.0 {
                    return f64::INFINITY;
                }
                (hi[2] / c).asinh() - (lo[2] / c).asinh()
            };
            let lx = hi[0] - lo[0];
            let outer = QuadratureSpec { abs_tol: 0.5 * spec.abs_tol, ..*spec };
            let middle = QuadratureSpec {
                abs_tol: 0.5 * spec.abs_tol / (100.0 * lx.max(1.0)),
                ..*spec
            };
            integrate(
                |x| integrate(|y| Ok(strip(x, y)), lo[1], hi[1], &middle),
                lo[0],
                hi[0],
                &outer,
            )
        }
    }
}

// ---------------------------------------------------------------------------
// momentum lattice and shell vectors
// ---------------------------------------------------------------------------

/// Grid-dual momentum lattice: p = j pi / extent with |j| <= n/2 - 1 along
/// each active axis, zero along suppressed axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumLattice {
    pub extent: f64,
    pub n: usize,
    pub dim: usize,
}

impl MomentumLattice {
    pub fn from_grid(grid: &GridSpec) -> Self {
        Self { extent: grid.extent, n: grid.n, dim: grid.dim }
    }

    /// Lattice spacing pi / L, the Fourier dual of the periodic box.
    pub fn dp(&self) -> f64 {
        std::f64::consts::PI / self.extent
    }

    pub fn max_index(&self) -> i64 {
        self.n as i64 / 2 - 1
    }

    pub fn check_mode(&self, j: &[i64; 3]) -> Result<(), ShellError> {
        for (a, &ja) in j.iter().enumerate() {
            if a >= self.dim {
                if ja != 0 {
                    return Err(ShellError::Lattice(format!(
                        "mode {j:?} uses suppressed axis {a}"
                    )));
                }
            } else if ja.abs() > self.max_index() {
                return Err(ShellError::Lattice(format!(
                    "mode {j:?} outside |j| <= {} lattice",
                    self.max_index()
                )));
            }
        }
        Ok(())
    }

    pub fn momentum(&self, j: &[i64; 3]) -> [f64; 3] {
        let dp = self.dp();
        [j[0] as f64 * dp, j[1] as f64 * dp, j[2] as f64 * dp]
    }

    /// Nearest lattice index of a raw momentum vector, requiring it to sit on
    /// a lattice site to within a relative 1e-9.
    pub fn index_of(&self, p: &[f64; 3]) -> Result<[i64; 3], ShellError> {
        let dp = self.dp();
        let mut j = [0i64; 3];
        for a in 0..3 {
            let raw = p[a] / dp;
            let rounded = raw.round();
            if (raw - rounded).abs() > 1e-9 * (1.0 + raw.abs()) {
                return Err(ShellError::Lattice(format!(
                    "momentum {p:?} is not commensurate with dp = {dp}"
                )));
            }
            j[a] = rounded as i64;
        }
        self.check_mode(&j)?;
        Ok(j)
    }

    fn matches_grid(&self, grid: &GridSpec) -> bool {
        self.extent == grid.extent && self.n == grid.n && self.dim == grid.dim
    }

    /// All active-axis index combinations, lexicographically ascending.
    pub fn all_modes(&self) -> Vec<[i64; 3]> {
        let r = self.max_index();
        let mut out = Vec::new();
        let axis: Vec<i64> = (-r..=r).collect();
        match self.dim {
            1 => {
                for &j1 in &axis {
                    out.push([j1, 0, 0]);
                }
            }
            _ => {
                for &j1 in &axis {
                    for &j2 in &axis {
                        for &j3 in &axis {
                            out.push([j1, j2, j3]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Sparse complex amplitudes on the momentum lattice (plain L^2 weights).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    pub lattice: MomentumLattice,
    pub entries: BTreeMap<[i64; 3], Complex64>,
}

impl LatticeFn {
    pub fn new(lattice: MomentumLattice) -> Self {
        Self { lattice, entries: BTreeMap::new() }
    }

    pub fn set(&mut self, j: [i64; 3], amp: Complex64) -> Result<(), ShellError> {
        self.lattice.check_mode(&j)?;
        self.entries.insert(j, amp);
        Ok(())
    }

    /// Sum |f|^2 dp^dim.
    pub fn norm2(&self) -> f64 {
        let cell = self.lattice.dp().powi(self.lattice.dim as i32);
        self.entries.values().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }
}

/// Sparse amplitudes of a function on the mass shell, sampled at the lifted
/// lattice sites; carries the measure weight 1/sqrt(m^2 + p^2) in its norm.
#[derive(Debug, Clone, PartialEq)]
pub struct MassShellVector {
    pub m: f64,
    pub lattice: MomentumLattice,
    pub entries: BTreeMap<[i64; 3], Complex64>,
}

impl MassShellVector {
    pub fn new(m: f64, lattice: MomentumLattice) -> Result<Self, ShellError> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(ShellError::Config(format!("mass must be finite and >= 0, got {m}")));
        }
        Ok(Self { m, lattice, entries: BTreeMap::new() })
    }

    pub fn set(&mut self, j: [i64; 3], amp: Complex64) -> Result<(), ShellError> {
        self.lattice.check_mode(&j)?;
        if self.m == 0.0 && j == [0, 0, 0] {
            return Err(ShellError::Lattice(
                "massless shell weight is singular at p = 0; exclude the origin".into(),
            ));
        }
        self.entries.insert(j, amp);
        Ok(())
    }

    /// Shell frequency sqrt(m^2 + p^2) of one mode.
    pub fn mu(&self, j: &[i64; 3]) -> f64 {
        let p = self.lattice.momentum(j);
        shell_embed(p, self.m)[0]
    }

    /// Sum |F|^2 w dp^dim with w = 1/mu.
    pub fn norm2(&self) -> f64 {
        let cell = self.lattice.dp().powi(self.lattice.dim as i32);
        self.entries
            .iter()
            .map(|(j, a)| a.norm_sqr() / self.mu(j))
            .sum::<f64>()
            * cell
    }

    pub fn scale(&mut self, s: Complex64) {
        for a in self.entries.values_mut() {
            *a *= s;
        }
    }
}

/// Measure-weighted inner product sum conj(F) G w dp^dim over shared modes.
pub fn shell_inner(f: &MassShellVector, g: &MassShellVector) -> Result<Complex64, ShellError> {
    if f.lattice != g.lattice || f.m != g.m {
        return Err(ShellError::Lattice(
            "shell vectors live on different lattices or masses".into(),
        ));
    }
    let cell = f.lattice.dp().powi(f.lattice.dim as i32);
    let mut acc = Complex64::ZERO;
    for (j, a) in &f.entries {
        if let Some(b) = g.entries.get(j) {
            acc += a.conj() * b / f.mu(j);
        }
    }
    Ok(acc * cell)
}

/// Multiply by (m^2 + p^2)^{1/4}: the unique positive multiplier that makes
/// the lattice L^2 norm match the shell norm exactly.
pub fn j_transform(f: &LatticeFn, m: f64) -> Result<MassShellVector, ShellError> {
    let mut out = MassShellVector::new(m, f.lattice)?;
    for (j, a) in &f.entries {
        let mu = out.mu(j);
        if mu == 0.0 {
            return Err(ShellError::Lattice(
                "massless shell weight is singular at p = 0; exclude the origin".into(),
            ));
        }
        out.set(*j, a * mu.sqrt())?;
    }
    Ok(out)
}

/// Inverse of the multiplier transform.
pub fn j_inverse(f: &MassShellVector) -> Result<LatticeFn, ShellError> {
    let mut out = LatticeFn::new(f.lattice);
    for (j, a) in &f.entries {
        let mu = f.mu(j);
        if mu == 0.0 {
            return Err(ShellError::Lattice(
                "massless shell weight is singular at p = 0; exclude the origin".into(),
            ));
        }
        out.set(*j, a / mu.sqrt())?;
    }
    Ok(out)
}

/// Synthesis onto the periodic grid at time t:
/// phi(x) = c sum_k dp^dim w_k F_k e^{-i(mu_k t - p_k x)}, pi = d_t phi,
/// with c = 1/sqrt(2 V dp^dim) so the field norm equals the shell norm.
pub fn synthesize(
    f: &MassShellVector,
    grid: &GridSpec,
    t: f64,
) -> Result<FieldState, ShellError> {
    if !f.lattice.matches_grid(grid) {
        return Err(ShellError::Lattice(format!(
            "lattice (L = {}, n = {}, dim = {}) does not match grid (L = {}, n = {}, dim = {})",
            f.lattice.extent, f.lattice.n, f.lattice.dim, grid.extent, grid.n, grid.dim
        )));
    }
    let dpd = f.lattice.dp().powi(grid.dim as i32);
    let volume = (2.0 * grid.extent).powi(grid.dim as i32);
    let c = 1.0 / (2.0 * volume * dpd).sqrt();
    let mut state = FieldState::zero(grid, t);
    // Premultiplied per-mode data in fixed (lexicographic) order.
    let modes: Vec<([f64; 3], f64, Complex64)> = f
        .entries
        .iter()
        .map(|(j, a)| {
            let p = f.lattice.momentum(j);
            let mu = f.mu(j);
            (p, mu, c * dpd / mu * a)
        })
        .collect();
    for idx in 0..grid.points() {
        let x = grid.coords(idx);
        let mut phi = Complex64::ZERO;
        let mut pi = Complex64::ZERO;
        for (p, mu, amp) in &modes {
            let phase = -(mu * t - (p[0] * x[0] + p[1] * x[1] + p[2] * x[2]));
            let wave = amp * Complex64::new(0.0, phase).exp();
            phi += wave;
            pi += Complex64::new(0.0, -mu) * wave;
        }
        state.phi[idx] = phi;
        state.pi[idx] = pi;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// packet specification (shared CLI schema)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeAmp {
    /// Raw momentum; must sit on the grid-dual lattice.
    pub p: [f64; 3],
    /// Complex amplitude as [re, im].
    pub amp: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PacketProfile {
    /// Explicit list of lattice modes.
    Modes { modes: Vec<ModeAmp> },
    /// Gaussian envelope exp(-(width (p - p0)/2)^2) with phase e^{-i p center}.
    Gaussian { center: [f64; 3], width: f64, p0: [f64; 3] },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketSpec {
    pub m: f64,
    #[serde(flatten)]
    pub profile: PacketProfile,
    /// Rescale to unit shell norm (default true).
    #[serde(default = "default_true")]
    pub normalize: bool,
}

/// Realize a packet spec as amplitudes on the given lattice.
pub fn build_packet(
    spec: &PacketSpec,
    lattice: &MomentumLattice,
) -> Result<MassShellVector, ShellError> {
    let mut out = MassShellVector::new(spec.m, *lattice)?;
    match &spec.profile {
        PacketProfile::Modes { modes } => {
            if modes.is_empty() {
                return Err(ShellError::Config("packet needs at least one mode".into()));
            }
            for mode in modes {
                let j = lattice.index_of(&mode.p)?;
                out.set(j, Complex64::new(mode.amp[0], mode.amp[1]))?;
            }
        }
        PacketProfile::Gaussian { center, width, p0 } => {
            if !(width.is_finite() && *width > 0.0) {
                return Err(ShellError::Config(format!(
                    "gaussian width must be positive, got {width}"
                )));
            }
            let mut best = 0.0f64;
            let mut amps = Vec::new();
            for j in lattice.all_modes() {
                if spec.m == 0.0 && j == [0, 0, 0] {
                    continue;
                }
                let p = lattice.momentum(&j);
                let mut q2 = 0.0;
                let mut phase = 0.0;
                for a in 0..3 {
                    let d = p[a] - p0[a];
                    q2 += d * d;
                    phase -= p[a] * center[a];
                }
                let env = (-(width * width * q2) / 4.0).exp();
                best = best.max(env);
                amps.push((j, env * Complex64::new(0.0, phase).exp()));
            }
            for (j, a) in amps {
                if a.norm() > 1e-14 * best {
                    out.set(j, a)?;
                }
            }
        }
    }
    if spec.normalize {
        let n2 = out.norm2();
        if n2 == 0.0 {
            return Err(ShellError::Config("packet has zero norm".into()));
        }
        out.scale(Complex64::new(1.0 / n2.sqrt(), 0.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{evolve, kg_inner_product};
    use crate::metric::MetricField;
    use crate::rand_util::{complex_in_disc, rng_from_seed};
    use num_complex::Complex64 as C;
    use std::f64::consts::PI;

    #[test]
    fn embed_examples() {
        assert_eq!(shell_embed([0.0; 3], 1.0), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(shell_embed([3.0, 0.0, 0.0], 4.0), [5.0, 3.0, 0.0, 0.0]);
        assert_eq!(shell_embed([1.0, 2.0, 2.0], 0.0), [3.0, 1.0, 2.0, 2.0]);
        let q = shell_embed([0.3, -1.2, 0.7], 2.5);
        let defect = q[0] * q[0] - (q[1] * q[1] + q[2] * q[2] + q[3] * q[3]) - 2.5 * 2.5;
        assert!(defect.abs() < 1e-12);
    }

    #[test]
    fn massless_unit_ball_measure() {
        let mu = shell_measure(
            &MomentumRegion::Ball { radius: 1.0 },
            0.0,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((mu - 2.0 * PI).abs() < 1e-7, "got {mu}");
    }

    #[test]
    fn heavy_mass_box_measure_approaches_volume_over_m() {
        let m = 1e3;
        let mu = shell_measure(
            &MomentumRegion::Box { lo: [0.0; 3], hi: [1.0; 3] },
            m,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((mu * m - 1.0).abs() < 1e-4, "mu*m = {}", mu * m);
    }

    #[test]
    fn empty_regions_have_zero_measure() {
        let spec = QuadratureSpec::default();
        let empty_box = MomentumRegion::Box { lo: [0.0; 3], hi: [1.0, 0.0, 1.0] };
        assert_eq!(shell_measure(&empty_box, 1.0, &spec).unwrap(), 0.0);
        assert_eq!(
            shell_measure(&MomentumRegion::Ball { radius: 0.0 }, 1.0, &spec).unwrap(),
            0.0
        );
    }

    #[test]
    fn measure_is_additive_over_disjoint_boxes() {
        let spec = QuadratureSpec::default();
        let m = 0.7;
        let whole = shell_measure(
            &MomentumRegion::Box { lo: [0.0; 3], hi: [1.0; 3] },
            m,
            &spec,
        )
        .unwrap();
        let left = shell_measure(
            &MomentumRegion::Box { lo: [0.0; 3], hi: [0.5, 1.0, 1.0] },
            m,
            &spec,
        )
        .unwrap();
        let right = shell_measure(
            &MomentumRegion::Box { lo: [0.5, 0.0, 0.0], hi: [1.0; 3] },
            m,
            &spec,
        )
        .unwrap();
        assert!((whole - left - right).abs() < 1e-7, "gap {}", whole - left - right);
    }

    #[test]
    fn exhausted_quadrature_reports_error() {
        let spec = QuadratureSpec { abs_tol: 1e-18, max_depth: 3 };
        let res = shell_measure(&MomentumRegion::Ball { radius: 1.0 }, 0.5, &spec);
        assert!(matches!(res, Err(ShellError::Quadrature(_))));
    }

    fn lattice_1d() -> MomentumLattice {
        MomentumLattice { extent: PI, n: 64, dim: 1 }
    }

    #[test]
    fn multiplier_transform_preserves_norm() {
        let mut rng = rng_from_seed(11);
        let mut f = LatticeFn::new(lattice_1d());
        for j in [-5i64, -2, 0, 1, 3, 7] {
            f.set([j, 0, 0], complex_in_disc(&mut rng)).unwrap();
        }
        let shell = j_transform(&f, 1.0).unwrap();
        let (a, b) = (f.norm2(), shell.norm2());
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
    }

    #[test]
    fn multiplier_round_trip() {
        let mut rng = rng_from_seed(12);
        let mut f = LatticeFn::new(lattice_1d());
        for j in [-8i64, -1, 2, 9] {
            f.set([j, 0, 0], 2.0 * complex_in_disc(&mut rng)).unwrap();
        }
        let back = j_inverse(&j_transform(&f, 0.8).unwrap()).unwrap();
        for (j, a) in &f.entries {
            let b = back.entries[j];
            assert!((a - b).norm() < 1e-13 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn multiplier_scales_constant_input() {
        let mut f = LatticeFn::new(lattice_1d());
        for j in [-3i64, 1, 4] {
            f.set([j, 0, 0], C::ONE).unwrap();
        }
        let shell = j_transform(&f, 1.0).unwrap();
        for (j, a) in &shell.entries {
            let p = lattice_1d().momentum(j)[0];
            let want = (1.0 + p * p).powf(0.25);
            assert!((a.re - want).abs() < 1e-13 && a.im == 0.0);
        }
    }

    #[test]
    fn massless_origin_rejected() {
        let mut f = LatticeFn::new(lattice_1d());
        f.set([0, 0, 0], C::ONE).unwrap();
        assert!(matches!(j_transform(&f, 0.0), Err(ShellError::Lattice(_))));
        let mut v = MassShellVector::new(0.0, lattice_1d()).unwrap();
        assert!(matches!(v.set([0, 0, 0], C::ONE), Err(ShellError::Lattice(_))));
    }

    #[test]
    fn off_lattice_momentum_rejected() {
        let lat = lattice_1d();
        assert!(lat.index_of(&[1.0, 0.0, 0.0]).is_ok());
        assert!(matches!(lat.index_of(&[1.05, 0.0, 0.0]), Err(ShellError::Lattice(_))));
        assert!(matches!(lat.check_mode(&[40, 0, 0]), Err(ShellError::Lattice(_))));
        assert!(matches!(lat.check_mode(&[1, 1, 0]), Err(ShellError::Lattice(_))));
    }

    #[test]
    fn single_mode_synthesis_calibration() {
        // The synthesized field norm must equal the mode's measure weight.
        for (dim, n) in [(1usize, 64usize), (3, 16)] {
            let grid = GridSpec::new(PI, n, dim, 0.01).unwrap();
            let lat = MomentumLattice::from_grid(&grid);
            let mut f = MassShellVector::new(1.2, lat).unwrap();
            let j = if dim == 1 { [3, 0, 0] } else { [2, -1, 3] };
            f.set(j, C::new(0.8, -0.5)).unwrap();
            let state = synthesize(&f, &grid, 0.3).unwrap();
            let ip = kg_inner_product(&state, &state, &MetricField::Minkowski, &grid).unwrap();
            let want = f.norm2();
            assert!((ip.re - want).abs() < 1e-12 * want, "dim {dim}: {} vs {want}", ip.re);
            assert!(ip.im.abs() < 1e-12 * want);
        }
    }

    #[test]
    fn synthesis_matches_shell_gram_matrix() {
        let mut rng = rng_from_seed(21);
        let grid = GridSpec::new(PI, 64, 1, 0.01).unwrap();
        let lat = MomentumLattice::from_grid(&grid);
        let mut f = MassShellVector::new(0.6, lat).unwrap();
        let mut g = MassShellVector::new(0.6, lat).unwrap();
        for j in [-9i64, -4, -1, 0, 2, 5, 8, 13] {
            f.set([j, 0, 0], complex_in_disc(&mut rng)).unwrap();
            g.set([j, 0, 0], complex_in_disc(&mut rng)).unwrap();
        }
        let t = 0.7;
        let kf = synthesize(&f, &grid, t).unwrap();
        let kg = synthesize(&g, &grid, t).unwrap();
        let field_ip = kg_inner_product(&kf, &kg, &MetricField::Minkowski, &grid).unwrap();
        let shell_ip = shell_inner(&f, &g).unwrap();
        assert!(
            (field_ip - shell_ip).norm() < 1e-10 * (1.0 + shell_ip.norm()),
            "{field_ip} vs {shell_ip}"
        );
    }

    #[test]
    fn zero_vector_synthesizes_zero_field() {
        let grid = GridSpec::new(PI, 64, 1, 0.01).unwrap();
        let f = MassShellVector::new(1.0, MomentumLattice::from_grid(&grid)).unwrap();
        let state = synthesize(&f, &grid, 0.0).unwrap();
        assert!(state.phi.iter().all(|c| *c == C::ZERO));
        assert!(state.pi.iter().all(|c| *c == C::ZERO));
    }

    #[test]
    fn incommensurate_lattice_rejected() {
        let grid = GridSpec::new(PI, 64, 1, 0.01).unwrap();
        let other = MomentumLattice { extent: PI, n: 32, dim: 1 };
        let f = MassShellVector::new(1.0, other).unwrap();
        assert!(matches!(synthesize(&f, &grid, 0.0), Err(ShellError::Lattice(_))));
    }

    #[test]
    fn synthesis_intertwines_evolution() {
        // Positive-frequency evolution is phase multiplication, so evolving
        // the synthesized field matches synthesizing at the later time up to
        // the h^2 dispersion gap of the spatial stencil.
        let n = 128;
        let l = PI;
        let h = 2.0 * l / n as f64;
        let grid = GridSpec::new(l, n, 1, 0.25 * h).unwrap();
        let lat = MomentumLattice::from_grid(&grid);
        let mut f = MassShellVector::new(1.0, lat).unwrap();
        f.set([1, 0, 0], C::new(0.7, 0.1)).unwrap();
        f.set([2, 0, 0], C::new(-0.3, 0.4)).unwrap();
        let t1 = 0.5;
        let evolved =
            evolve(&synthesize(&f, &grid, 0.0).unwrap(), &MetricField::Minkowski, 1.0, &grid, t1)
                .unwrap();
        let direct = synthesize(&f, &grid, t1).unwrap();
        let scale = direct.amplitude();
        let err = evolved
            .phi
            .iter()
            .zip(&direct.phi)
            .fold(0.0f64, |mx, (a, b)| mx.max((a - b).norm()));
        assert!(err < 1e-3 * (1.0 + scale), "err {err}");
    }

    #[test]
    fn packet_specs_deserialize_and_build() {
        let grid = GridSpec::new(PI, 64, 1, 0.01).unwrap();
        let lat = MomentumLattice::from_grid(&grid);
        let modes: PacketSpec = serde_json::from_str(
            r#"{ "m": 1.0, "modes": [ { "p": [1.0, 0.0, 0.0], "amp": [1.0, 0.0] },
                                       { "p": [2.0, 0.0, 0.0], "amp": [0.0, -0.5] } ] }"#,
        )
        .unwrap();
        let v = build_packet(&modes, &lat).unwrap();
        assert_eq!(v.entries.len(), 2);
        assert!((v.norm2() - 1.0).abs() < 1e-12);

        let gauss: PacketSpec = serde_json::from_str(
            r#"{ "m": 0.5, "center": [0.0, 0.0, 0.0], "width": 1.0, "p0": [2.0, 0.0, 0.0] }"#,
        )
        .unwrap();
        let v = build_packet(&gauss, &lat).unwrap();
        assert!(v.entries.len() > 5);
        assert!((v.norm2() - 1.0).abs() < 1e-12);
        // Peak amplitude sits at the carrier momentum.
        let peak = v.entries.iter().max_by(|a, b| {
            a.1.norm().partial_cmp(&b.1.norm()).unwrap()
        });
        assert_eq!(peak.unwrap().0, &[2, 0, 0]);
    }
}

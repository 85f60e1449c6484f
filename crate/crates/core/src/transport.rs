//! Transport of flat-era wave packets through the interpolation window and
//! isometry verification between the two ends.
//!
//! A packet synthesized at t_start < t1 lives in the exactly-Minkowski era of
//! the interpolated metric. Evolving it to t_end > t2 realizes the map onto
//! solution data for the base metric; comparing Gram matrices of a packet
//! family before (flat product) and after (base-metric product) certifies the
//! map is an isometry on that family, and backward evolution certifies
//! invertibility.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::interpolate::{InterpolateError, InterpolatedMetric, TransitionFunction};
use crate::kg::{evolve, kg_inner_product, FieldState, GridSpec, KgError};
use crate::mass_shell::{synthesize, MassShellVector, MomentumLattice, ShellError};
use crate::metric::{Metric, MetricField};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("scenario invalid: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Shell(#[from] ShellError),
    #[error(transparent)]
    Interpolate(#[from] InterpolateError),
}

/// A transport run: base metric, interpolation window, grid, mass, and the
/// flat-era start and curved-era end times.
#[derive(Debug, Clone)]
pub struct TransportScenario<M: Metric + Clone> {
    pub base: M,
    pub transition: TransitionFunction,
    pub grid: GridSpec,
    pub mass: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl<M: Metric + Clone> TransportScenario<M> {
    pub fn new(
        base: M,
        transition: TransitionFunction,
        grid: GridSpec,
        mass: f64,
        t_start: f64,
        t_end: f64,
    ) -> Result<Self, TransportError> {
        if !(t_start < transition.t1) {
            return Err(TransportError::Config(format!(
                "t_start = {t_start} must precede the window start {}",
                transition.t1
            )));
        }
        if !(t_end > transition.t2) {
            return Err(TransportError::Config(format!(
                "t_end = {t_end} must follow the window end {}",
                transition.t2
            )));
        }
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(TransportError::Config(format!(
                "mass must be finite and >= 0, got {mass}"
            )));
        }
        Ok(Self { base, transition, grid, mass, t_start, t_end })
    }

    pub fn interpolated(&self) -> InterpolatedMetric<M> {
        InterpolatedMetric::new(self.base.clone(), self.transition)
    }

    pub fn lattice(&self) -> MomentumLattice {
        MomentumLattice::from_grid(&self.grid)
    }
}

/// Synthesize in the flat era and evolve through the window to t_end.
pub fn transport_forward<M: Metric + Clone>(
    f: &MassShellVector,
    sc: &TransportScenario<M>,
) -> Result<FieldState, TransportError> {
    let init = synthesize(f, &sc.grid, sc.t_start)?;
    let metric = sc.interpolated();
    Ok(evolve(&init, &metric, sc.mass, &sc.grid, sc.t_end)?)
}

/// Relative L2 distance between two states on the same grid (phi and pi
/// jointly); 0/0 is reported as 0.
pub fn state_l2_error(got: &FieldState, want: &FieldState) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..got.phi.len().min(want.phi.len()) {
        num += (got.phi[i] - want.phi[i]).norm_sqr() + (got.pi[i] - want.pi[i]).norm_sqr();
        den += want.phi[i].norm_sqr() + want.pi[i].norm_sqr();
    }
    if den == 0.0 {
        if num == 0.0 {
            return 0.0;
        }
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Largest |phi| on the outermost lattice sites relative to the peak |phi|;
/// packets must stay below ~1e-8 here for periodic wrap to be harmless.
pub fn boundary_ratio(state: &FieldState, grid: &GridSpec) -> f64 {
    let n = grid.n;
    let mut peak = 0.0f64;
    let mut edge = 0.0f64;
    for idx in 0..grid.points() {
        let a = state.phi[idx].norm();
        peak = peak.max(a);
        let on_edge = match grid.dim {
            1 => idx == 0 || idx == n - 1,
            _ => {
                let i1 = idx / (n * n);
                let i2 = (idx / n) % n;
                let i3 = idx % n;
                [i1, i2, i3].iter().any(|&i| i == 0 || i == n - 1)
            }
        };
        if on_edge {
            edge = edge.max(a);
        }
    }
    if peak == 0.0 {
        return 0.0;
    }
    edge / peak
}

/// Worst boundary ratio over the synthesized family at t_start and the
/// transported family at t_end.
pub fn audit_support<M: Metric + Clone>(
    basis: &[MassShellVector],
    sc: &TransportScenario<M>,
) -> Result<f64, TransportError> {
    let mut worst = 0.0f64;
    for f in basis {
        let start = synthesize(f, &sc.grid, sc.t_start)?;
        worst = worst.max(boundary_ratio(&start, &sc.grid));
        let end = transport_forward(f, sc)?;
        worst = worst.max(boundary_ratio(&end, &sc.grid));
    }
    Ok(worst)
}

/// Gram matrices of a packet family: before, under the flat product at
/// t_start, and after transport, under the base metric's product at t_end.
pub fn gram_matrix<M: Metric + Clone>(
    basis: &[MassShellVector],
    sc: &TransportScenario<M>,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>), TransportError> {
    let k = basis.len();
    if k < 2 {
        return Err(TransportError::Config(format!(
            "gram comparison needs at least 2 packets, got {k}"
        )));
    }
    let mut starts = Vec::with_capacity(k);
    let mut ends = Vec::with_capacity(k);
    for f in basis {
        starts.push(synthesize(f, &sc.grid, sc.t_start)?);
        ends.push(transport_forward(f, sc)?);
    }
    let mut before = DMatrix::zeros(k, k);
    let mut after = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            before[(i, j)] =
                kg_inner_product(&starts[i], &starts[j], &MetricField::Minkowski, &sc.grid)?;
            after[(i, j)] = kg_inner_product(&ends[i], &ends[j], &sc.base, &sc.grid)?;
        }
    }
    Ok((before, after))
}

/// Largest entrywise |before - after|.
pub fn gram_defect(before: &DMatrix<Complex64>, after: &DMatrix<Complex64>) -> f64 {
    (before - after).iter().fold(0.0f64, |m, c| m.max(c.norm()))
}

/// Forward to t_end, backward to t_start, relative L2 error against the
/// original synthesized state.
pub fn round_trip<M: Metric + Clone>(
    f: &MassShellVector,
    sc: &TransportScenario<M>,
) -> Result<f64, TransportError> {
    let init = synthesize(f, &sc.grid, sc.t_start)?;
    let metric = sc.interpolated();
    let fwd = evolve(&init, &metric, sc.mass, &sc.grid, sc.t_end)?;
    let back = evolve(&fwd, &metric, sc.mass, &sc.grid, sc.t_start)?;
    Ok(state_l2_error(&back, &init))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementPoint {
    pub n: usize,
    pub defect: f64,
}

/// Gram defect across grid refinements, holding the Courant ratio dt/h fixed
/// and recreating the packet family on each level's lattice.
pub fn refinement_sweep<M: Metric + Clone>(
    proto: &TransportScenario<M>,
    basis: &[MassShellVector],
    ns: &[usize],
) -> Result<Vec<RefinementPoint>, TransportError> {
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let dt = proto.grid.dt * proto.grid.n as f64 / n as f64;
        let grid = GridSpec::new(proto.grid.extent, n, proto.grid.dim, dt)?;
        let sc = TransportScenario::new(
            proto.base.clone(),
            proto.transition,
            grid,
            proto.mass,
            proto.t_start,
            proto.t_end,
        )?;
        let lattice = sc.lattice();
        let mut family = Vec::with_capacity(basis.len());
        for f in basis {
            let mut refit = MassShellVector::new(f.m, lattice)?;
            for (j, a) in &f.entries {
                refit.set(*j, *a)?;
            }
            family.push(refit);
        }
        let (before, after) = gram_matrix(&family, &sc)?;
        out.push(RefinementPoint { n, defect: gram_defect(&before, &after) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ShapeFn;
    use crate::rand_util::{complex_in_disc, rng_from_seed};
    use num_complex::Complex64 as C;

    const EPS: f64 = 0.05;

    fn window() -> TransitionFunction {
        TransitionFunction::new(0.0, 1.0).unwrap()
    }

    fn frw() -> MetricField {
        MetricField::Frw { eps: EPS, shape: ShapeFn::Gauss { center: 0.5, width: 2.0 } }
    }

    fn scenario(base: MetricField, n: usize) -> TransportScenario<MetricField> {
        let l = 8.0;
        let h = 2.0 * l / n as f64;
        let grid = GridSpec::new(l, n, 1, 0.25 * h).unwrap();
        TransportScenario::new(base, window(), grid, 1.0, -0.5, 1.5).unwrap()
    }

    fn mode_vector(
        sc: &TransportScenario<MetricField>,
        modes: &[(i64, C)],
    ) -> MassShellVector {
        let mut f = MassShellVector::new(sc.mass, sc.lattice()).unwrap();
        for &(j, a) in modes {
            f.set([j, 0, 0], a).unwrap();
        }
        f
    }

    fn packet_family(sc: &TransportScenario<MetricField>, k: usize) -> Vec<MassShellVector> {
        let mut rng = rng_from_seed(31);
        (0..k)
            .map(|i| {
                let js = [-5 + 2 * i as i64, 1 + i as i64, 4 - 2 * i as i64];
                let modes: Vec<(i64, C)> =
                    js.iter().map(|&j| (j, complex_in_disc(&mut rng))).collect();
                mode_vector(sc, &modes)
            })
            .collect()
    }

    #[test]
    fn scenario_validation() {
        let grid = GridSpec::new(8.0, 64, 1, 0.05).unwrap();
        assert!(TransportScenario::new(
            MetricField::Minkowski, window(), grid, 1.0, 0.2, 1.5
        )
        .is_err());
        assert!(TransportScenario::new(
            MetricField::Minkowski, window(), grid, 1.0, -0.5, 0.9
        )
        .is_err());
        assert!(TransportScenario::new(
            MetricField::Minkowski, window(), grid, -1.0, -0.5, 1.5
        )
        .is_err());
    }

    #[test]
    fn minkowski_transport_is_free_evolution() {
        // With a Minkowski base the interpolation is the identity, so the
        // transported state must match free evolution by the same solver.
        let sc = scenario(MetricField::Minkowski, 256);
        let f = mode_vector(&sc, &[(2, C::new(0.8, -0.3)), (-5, C::new(0.2, 0.4))]);
        let got = transport_forward(&f, &sc).unwrap();
        let init = synthesize(&f, &sc.grid, sc.t_start).unwrap();
        let free =
            evolve(&init, &MetricField::Minkowski, sc.mass, &sc.grid, sc.t_end).unwrap();
        let err = state_l2_error(&got, &free);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn zero_packet_transports_to_zero() {
        let sc = scenario(frw(), 64);
        let f = MassShellVector::new(sc.mass, sc.lattice()).unwrap();
        let out = transport_forward(&f, &sc).unwrap();
        assert!(out.phi.iter().all(|c| *c == C::ZERO));
        assert!(out.pi.iter().all(|c| *c == C::ZERO));
    }

    #[test]
    fn single_mode_matches_reduced_ode() {
        // For a spatially uniform base the grid evolution of one Fourier mode
        // reduces exactly to a scalar ODE in the discrete symbol p_h^2;
        // integrate that ODE independently (hand-coded interpolation factors,
        // finer steps) and compare.
        let n = 128;
        let sc = scenario(frw(), n);
        let j = 2i64;
        let f = mode_vector(&sc, &[(j, C::new(0.7, 0.2))]);
        let init = synthesize(&f, &sc.grid, sc.t_start).unwrap();
        let got = transport_forward(&f, &sc).unwrap();

        let p = j as f64 * std::f64::consts::PI / sc.grid.extent;
        let h = sc.grid.h();
        let ph2 = (2.0 - 2.0 * (p * h).cos()) / (h * h);
        let (t1, t2) = (sc.transition.t1, sc.transition.t2);
        let (center, width) = (0.5, 2.0);
        let bump = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
        let bump_d = |u: f64| if u > 0.0 { (-1.0 / u).exp() / (u * u) } else { 0.0 };
        let f_and_slope = move |t: f64| -> (f64, f64) {
            let u = (t - t1) / (t2 - t1);
            if u <= 0.0 {
                return (0.0, 0.0);
            }
            if u >= 1.0 {
                return (1.0, 0.0);
            }
            let (a, b) = (bump(u), bump(1.0 - u));
            let val = a / (a + b);
            let slope = (bump_d(u) * b + a * bump_d(1.0 - u)) / ((a + b) * (a + b));
            (val, slope / (t2 - t1))
        };
        let scale = move |t: f64| -> (f64, f64) {
            let u = (t - center) / width;
            let e = (-u * u).exp();
            (1.0 + EPS * e, EPS * e * (-2.0 * u / width))
        };
        // chi'' = -(m^2 + p_h^2 a^{-2f}) chi - 3 (f' ln a + f a'/a) chi'
        let rhs = move |t: f64, chi: C, chidot: C| -> (C, C) {
            let (fv, fd) = f_and_slope(t);
            let (a, ad) = scale(t);
            let stiff = 1.0 + ph2 * a.powf(-2.0 * fv);
            let fric = 3.0 * (fd * a.ln() + fv * ad / a);
            (chidot, -stiff * chi - fric * chidot)
        };
        // Read off the mode coefficient at x = -L and integrate.
        let x0 = sc.grid.coords(0)[0];
        let carrier = C::new(0.0, p * x0).exp();
        let mut chi = init.phi[0] / carrier;
        let mut chidot = init.pi[0] / carrier;
        let dt = sc.grid.dt / 8.0;
        let steps = ((sc.t_end - sc.t_start) / dt).ceil() as usize;
        let dt = (sc.t_end - sc.t_start) / steps as f64;
        let mut t = sc.t_start;
        for _ in 0..steps {
            let (k1, l1) = rhs(t, chi, chidot);
            let (k2, l2) = rhs(t + 0.5 * dt, chi + 0.5 * dt * k1, chidot + 0.5 * dt * l1);
            let (k3, l3) = rhs(t + 0.5 * dt, chi + 0.5 * dt * k2, chidot + 0.5 * dt * l2);
            let (k4, l4) = rhs(t + dt, chi + dt * k3, chidot + dt * l3);
            chi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            chidot += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            t += dt;
        }
        let mut err = 0.0f64;
        for idx in 0..sc.grid.points() {
            let x = sc.grid.coords(idx)[0];
            let want = chi * C::new(0.0, p * x).exp();
            err = err.max((got.phi[idx] - want).norm());
        }
        assert!(err < 1e-6 * chi.norm().max(1.0), "err {err}");
    }

    #[test]
    fn gram_is_preserved_on_minkowski() {
        let sc = scenario(MetricField::Minkowski, 256);
        let family = packet_family(&sc, 3);
        let (before, after) = gram_matrix(&family, &sc).unwrap();
        let defect = gram_defect(&before, &after);
        assert!(defect < 1e-8, "defect {defect}");
    }

    #[test]
    fn gram_defect_shrinks_under_refinement() {
        let sc = scenario(frw(), 64);
        let family = packet_family(&sc, 3);
        let points = refinement_sweep(&sc, &family, &[64, 128]).unwrap();
        assert!(points[0].defect < 5e-3, "coarse defect {}", points[0].defect);
        assert!(
            points[1].defect < points[0].defect,
            "defects {:?}",
            points.iter().map(|p| p.defect).collect::<Vec<_>>()
        );
    }

    #[test]
    fn round_trip_errors() {
        let flat = scenario(MetricField::Minkowski, 256);
        let f = mode_vector(&flat, &[(2, C::new(0.8, -0.3))]);
        let err = round_trip(&f, &flat).unwrap();
        assert!(err < 1e-8, "flat round trip {err}");

        let curved = scenario(frw(), 64);
        let g = mode_vector(&curved, &[(2, C::new(0.8, -0.3))]);
        let err = round_trip(&g, &curved).unwrap();
        assert!(err < 1e-4, "curved round trip {err}");
    }

    #[test]
    fn round_trip_error_is_time_dominated() {
        // The semi-discrete flow is exactly reversible, so halving dt must
        // shrink the round-trip error by the integrator order.
        let sc = scenario(frw(), 64);
        let f = mode_vector(&sc, &[(3, C::new(0.5, 0.5))]);
        let coarse = round_trip(&f, &sc).unwrap();
        let mut fine_sc = sc.clone();
        fine_sc.grid = GridSpec::new(sc.grid.extent, sc.grid.n, 1, sc.grid.dt / 2.0).unwrap();
        let fine = round_trip(&f, &fine_sc).unwrap();
        assert!(coarse / fine >= 8.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn transport_is_linear() {
        let sc = scenario(frw(), 64);
        let f = mode_vector(&sc, &[(2, C::new(0.8, -0.3)), (5, C::new(0.1, 0.1))]);
        let g = mode_vector(&sc, &[(-3, C::new(0.4, 0.6))]);
        let (alpha, beta) = (C::new(0.3, -0.7), C::new(-1.1, 0.2));
        let mut combo = MassShellVector::new(sc.mass, sc.lattice()).unwrap();
        for (j, a) in &f.entries {
            combo.set(*j, alpha * a).unwrap();
        }
        for (j, a) in &g.entries {
            let prev = combo.entries.get(j).copied().unwrap_or(C::ZERO);
            combo.set(*j, prev + beta * a).unwrap();
        }
        let uf = transport_forward(&f, &sc).unwrap();
        let ug = transport_forward(&g, &sc).unwrap();
        let uc = transport_forward(&combo, &sc).unwrap();
        let scale = uc.amplitude().max(1.0);
        for i in 0..sc.grid.points() {
            let want = alpha * uf.phi[i] + beta * ug.phi[i];
            assert!((uc.phi[i] - want).norm() < 1e-10 * scale);
            let want_pi = alpha * uf.pi[i] + beta * ug.pi[i];
            assert!((uc.pi[i] - want_pi).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn transport_has_flow_property() {
        // Stopping at a commensurate intermediate slice and restarting
        // retraces the same steps bit for bit.
        let sc = scenario(frw(), 64);
        let f = mode_vector(&sc, &[(2, C::new(0.8, -0.3))]);
        let metric = sc.interpolated();
        let init = synthesize(&f, &sc.grid, sc.t_start).unwrap();
        let single = evolve(&init, &metric, sc.mass, &sc.grid, sc.t_end).unwrap();
        let mid = evolve(&init, &metric, sc.mass, &sc.grid, 0.5).unwrap();
        let two_leg = evolve(&mid, &metric, sc.mass, &sc.grid, sc.t_end).unwrap();
        let err = state_l2_error(&two_leg, &single);
        assert!(err < 1e-13, "err {err}");
    }

    #[test]
    fn packet_support_stays_off_boundary() {
        // Positive-frequency packets decay like e^{-m|x|} (the measure weight
        // has poles at p = +- i m), so the audit threshold needs m L large;
        // the envelope also drifts at group velocity p0/mu during the run.
        let grid = GridSpec::new(8.0, 128, 1, 0.25 * 0.125).unwrap();
        let sc = TransportScenario::new(frw(), window(), grid, 3.0, -0.5, 1.5).unwrap();
        let spec: crate::mass_shell::PacketSpec = serde_json::from_str(
            r#"{ "m": 3.0, "center": [0.0,0.0,0.0], "width": 1.2, "p0": [1.0,0.0,0.0] }"#,
        )
        .unwrap();
        let packet = crate::mass_shell::build_packet(&spec, &sc.lattice()).unwrap();
        let worst = audit_support(&[packet], &sc).unwrap();
        assert!(worst < 1e-8, "boundary ratio {worst}");
    }
}

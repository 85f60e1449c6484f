//! Scenario runners: each pipeline turns a scenario into check records and
//! series tables. Everything is deterministic given the scenario and seed.

use num_complex::Complex64;

use regularframe_core::chart::{
    build_regular_chart, cover_region, CoverConfig, GeodesicConfig, RadiusConfig, Region4,
};
use regularframe_core::fock::{
    check_canonical_relations, commutator, hermitian_spectrum, second_quantize, smeared_field,
    spectrum_defect, transport_representation, CategoryRegistry, FockSpace, OperatorMatrix,
    TheoryRecord,
};
use regularframe_core::interpolate::{verify_interpolation, TransitionFunction};
use regularframe_core::kg::{conservation_drift, kg_inner_product, GridSpec};
use regularframe_core::lorentz::{lorentzian_signature, minkowski, SpacetimePoint};
use regularframe_core::mass_shell::{
    build_packet, j_transform, shell_measure, synthesize, LatticeFn, MomentumLattice,
    MomentumRegion,
};
use regularframe_core::metric::MetricField;
use regularframe_core::rand_util::{
    complex_in_disc, int_in, random_complex_vector, random_unitary, rng_from_seed, Rng,
};
use regularframe_core::transport::{
    gram_defect, gram_matrix, refinement_sweep, round_trip, TransportScenario,
};

use crate::report::{CheckRecord, Report, Table};
use crate::scenario::{
    ChartScenario, EvolveScenario, FockScenario, InterpolateScenario, Scenario, ShellScenario,
    TransportScenarioInput,
};
use crate::CliError;

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Run one scenario. `seed_override` replaces the scenario's own seed; the
/// effective seed is echoed in the report.
pub fn run_scenario(sc: &Scenario, seed_override: Option<u64>) -> Result<Report, CliError> {
    sc.validate()?;
    let seed = seed_override.unwrap_or(sc.seed());
    let echo = serde_json::to_value(sc).expect("scenario echo");
    let (checks, tables) = match sc {
        Scenario::Chart(s) => run_chart(s)?,
        Scenario::Interpolate(s) => run_interpolate(s)?,
        Scenario::Evolve(s) => run_evolve(s)?,
        Scenario::Transport(s) => run_transport(s)?,
        Scenario::Shell(s) => run_shell(s, seed)?,
        Scenario::Fock(s) => run_fock(s, seed)?,
        Scenario::Suite(s) => {
            let suite = crate::suite::run_suite(std::path::Path::new(&s.dir), seed_override, 1)?;
            let checks = suite
                .entries
                .iter()
                .map(|e| {
                    let failed = match &e.report {
                        Some(r) => r.checks.iter().filter(|c| !c.pass).count() as f64,
                        None => f64::MAX,
                    };
                    CheckRecord::le(&format!("scenario:{}", e.file), failed, 0.5)
                })
                .collect();
            (checks, Vec::new())
        }
    };
    Ok(Report::new(sc.kind(), seed, echo, checks, tables))
}

// ---------------------------------------------------------------------------
// chart
// ---------------------------------------------------------------------------

fn run_chart(s: &ChartScenario) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let center = SpacetimePoint {
        t: s.center[0],
        x: [s.center[1], s.center[2], s.center[3]],
    };
    let geo = GeodesicConfig::default();
    let rad = RadiusConfig { r_cap: s.r_cap, ..RadiusConfig::default() };
    let chart = build_regular_chart(&s.metric, &center, &geo, &rad).map_err(run_err)?;
    let mut checks = Vec::new();

    checks.push(CheckRecord::le(
        "origin_minkowski_defect",
        chart.origin_defect(&s.metric).map_err(run_err)?,
        s.origin_tol,
    ));

    let lattice = chart.sample_lattice();
    let mut signature_hits = 0usize;
    let mut law_defect = 0.0f64;
    let scale = 2.0 * chart.r / std::f64::consts::PI;
    let eta = minkowski();
    for z in &lattice {
        let g = chart.pulled_metric_at(&s.metric, z).map_err(run_err)?;
        if lorentzian_signature(&g) {
            signature_hits += 1;
        }
        if s.closed_form_tol.is_some() {
            // Flat-family law: straight-line geodesics leave only the
            // rescale Jacobian, so g(z) = diag(eta_ii c_i^2), c_i = s/(1+z_i^2).
            let mut expected = nalgebra::Matrix4::zeros();
            for i in 0..4 {
                let c = scale / (1.0 + z[i] * z[i]);
                expected[(i, i)] = eta[(i, i)] * c * c;
            }
            law_defect = law_defect
                .max((g - expected).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }
    checks.push(CheckRecord::ge(
        "signature_fraction",
        signature_hits as f64 / lattice.len() as f64,
        1.0,
    ));
    if let Some(tol) = s.closed_form_tol {
        checks.push(CheckRecord::le("pullback_closed_form_defect", law_defect, tol));
    }

    if let Some(cover) = &s.cover {
        let region = Region4 {
            lo: [
                s.center[0] - cover.half_side,
                s.center[1] - cover.half_side,
                s.center[2] - cover.half_side,
                s.center[3] - cover.half_side,
            ],
            hi: [
                s.center[0] + cover.half_side,
                s.center[1] + cover.half_side,
                s.center[2] + cover.half_side,
                s.center[3] + cover.half_side,
            ],
        };
        let cfg = CoverConfig {
            lattice_per_axis: cover.lattice_per_axis,
            max_charts: cover.max_charts,
        };
        let result = cover_region(&s.metric, &region, &geo, &rad, &cfg).map_err(run_err)?;
        checks.push(CheckRecord::ge(
            "region_coverage",
            result.coverage_fraction(),
            cover.required,
        ));
    }
    Ok((checks, Vec::new()))
}

// ---------------------------------------------------------------------------
// interpolate
// ---------------------------------------------------------------------------

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

fn run_interpolate(s: &InterpolateScenario) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let tf = TransitionFunction::new(s.window[0], s.window[1]).map_err(run_err)?;
    let times = match &s.times {
        Some(ts) => ts.clone(),
        None => {
            let w = s.window[1] - s.window[0];
            linspace(s.window[0] - w, s.window[1] + w, s.line_points)
        }
    };
    let check = verify_interpolation(&s.metric, &tf, &times, &s.spatial).map_err(run_err)?;
    let checks = vec![
        CheckRecord::le(
            "flat_era_bitwise",
            if check.flat_exact { 0.0 } else { 1.0 },
            0.5,
        ),
        CheckRecord::le("curved_tail_defect", check.tail_defect, s.tail_tol),
        CheckRecord::le("slope_jump", check.c1_defect, s.c1_tol),
        CheckRecord::le(
            "signature_everywhere",
            if check.signature_ok { 0.0 } else { 1.0 },
            0.5,
        ),
    ];
    let mut profile = Table::new("profile", &["t", "f", "g00", "g11", "g22", "g33"]);
    for row in &check.series {
        profile.push(vec![row.t, row.f, row.diag[0], row.diag[1], row.diag[2], row.diag[3]]);
    }
    Ok((checks, vec![profile]))
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

/// Observed order between successive levels; perfect cancellation on the
/// finer level counts as converged.
fn pairwise_orders(ns: &[usize], defects: &[f64]) -> Vec<f64> {
    let mut orders = Vec::new();
    for i in 0..ns.len().saturating_sub(1) {
        let ratio = defects[i] / defects[i + 1];
        let scale = ns[i + 1] as f64 / ns[i] as f64;
        if defects[i + 1] == 0.0 {
            orders.push(f64::INFINITY);
        } else if ratio > 0.0 && ratio.is_finite() {
            orders.push(ratio.ln() / scale.ln());
        } else {
            orders.push(0.0);
        }
    }
    orders
}

fn run_evolve(s: &EvolveScenario) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let grid = s.grid.build()?;
    let mass = s.packet.m;
    let measure = |grid: &GridSpec| -> Result<f64, CliError> {
        let lattice = MomentumLattice::from_grid(grid);
        let packet = build_packet(&s.packet, &lattice).map_err(run_err)?;
        let init = synthesize(&packet, grid, 0.0).map_err(run_err)?;
        conservation_drift(&init, &s.metric, mass, grid, &s.times).map_err(run_err)
    };
    let drift = measure(&grid)?;
    let mut checks = vec![CheckRecord::le("norm_drift", drift, s.drift_tol)];
    let mut tables = Vec::new();
    if let Some(refine) = &s.refine {
        let mut defects = Vec::new();
        for &n in &refine.ns {
            let dt = grid.dt * grid.n as f64 / n as f64;
            let fine = GridSpec::new(grid.extent, n, grid.dim, dt).map_err(run_err)?;
            defects.push(measure(&fine)?);
        }
        let orders = pairwise_orders(&refine.ns, &defects);
        let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(CheckRecord::ge("refinement_order", worst, refine.order_min));
        let mut table = Table::new("drift_refinement", &["n", "drift"]);
        for (i, &n) in refine.ns.iter().enumerate() {
            table.push(vec![n as f64, defects[i]]);
        }
        tables.push(table);
    }
    Ok((checks, tables))
}

// ---------------------------------------------------------------------------
// transport
// ---------------------------------------------------------------------------

fn run_transport(s: &TransportScenarioInput) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let tf = TransitionFunction::new(s.window[0], s.window[1]).map_err(run_err)?;
    let grid = s.grid.build()?;
    let scenario =
        TransportScenario::new(s.metric.clone(), tf, grid, s.mass, s.t_start, s.t_end)
            .map_err(run_err)?;
    let lattice = scenario.lattice();
    let mut basis = Vec::with_capacity(s.basis.len());
    for spec in &s.basis {
        basis.push(build_packet(spec, &lattice).map_err(run_err)?);
    }
    let (before, after) = gram_matrix(&basis, &scenario).map_err(run_err)?;
    let mut checks = vec![CheckRecord::le(
        "gram_defect",
        gram_defect(&before, &after),
        s.gram_tol,
    )];
    checks.push(CheckRecord::le(
        "round_trip_error",
        round_trip(&basis[0], &scenario).map_err(run_err)?,
        s.round_trip_tol,
    ));
    let mut tables = Vec::new();
    if let Some(refine) = &s.refine {
        let points = refinement_sweep(&scenario, &basis, &refine.ns).map_err(run_err)?;
        if refine.strictly_decreasing {
            let worst_ratio = points
                .windows(2)
                .map(|w| w[1].defect / w[0].defect)
                .fold(0.0f64, f64::max);
            checks.push(CheckRecord::lt("refinement_contraction", worst_ratio, 1.0));
        }
        let mut table = Table::new("gram_refinement", &["n", "defect"]);
        for p in &points {
            table.push(vec![p.n as f64, p.defect]);
        }
        tables.push(table);
    }
    Ok((checks, tables))
}

// ---------------------------------------------------------------------------
// shell
// ---------------------------------------------------------------------------

/// Closed-form shell measure of a centered ball: the antiderivative of
/// 4 pi r^2 / sqrt(m^2 + r^2).
fn ball_reference(radius: f64, m: f64) -> f64 {
    if m == 0.0 {
        return 2.0 * std::f64::consts::PI * radius * radius;
    }
    let root = (radius * radius + m * m).sqrt();
    2.0 * std::f64::consts::PI * (radius * root - m * m * (radius / m).asinh())
}

fn random_lattice_vector(
    rng: &mut Rng,
    lattice: MomentumLattice,
    m: f64,
    modes: usize,
) -> Result<LatticeFn, CliError> {
    let mut f = LatticeFn::new(lattice);
    let top = lattice.max_index();
    let mut placed = 0usize;
    while placed < modes {
        let mut j = [0i64; 3];
        for a in 0..lattice.dim {
            j[a] = int_in(rng, -top, top);
        }
        if m == 0.0 && j == [0, 0, 0] {
            continue;
        }
        f.set(j, complex_in_disc(rng)).map_err(run_err)?;
        placed += 1;
    }
    Ok(f)
}

fn run_shell(s: &ShellScenario, seed: u64) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let quad = s.quadrature.unwrap_or_default();
    let mut checks = Vec::new();
    let mut table = Table::new("measures", &["index", "mass", "value", "reference"]);
    for (i, mc) in s.measure.iter().enumerate() {
        let value = shell_measure(&mc.region, mc.mass, &quad).map_err(run_err)?;
        let reference = match mc.expect {
            Some(e) => e,
            None => match &mc.region {
                MomentumRegion::Ball { radius } => ball_reference(*radius, mc.mass),
                MomentumRegion::Box { .. } => unreachable!("validated: boxes carry expect"),
            },
        };
        table.push(vec![i as f64, mc.mass, value, reference]);
        checks.push(CheckRecord::le(
            &format!("measure_{i}"),
            (value - reference).abs(),
            mc.tol,
        ));
    }
    let mut tables = Vec::new();
    if !s.measure.is_empty() {
        tables.push(table);
    }

    if let Some(chain) = &s.chain {
        let mut rng = rng_from_seed(seed);
        let lattice = MomentumLattice {
            extent: chain.lattice.extent,
            n: chain.lattice.n,
            dim: chain.lattice.dim,
        };
        let grid = GridSpec::new(
            chain.lattice.extent,
            chain.lattice.n,
            chain.lattice.dim,
            // The chain never steps in time; any dt inside the stability
            // bound dt <= extent / (2 n) works.
            chain.lattice.extent / (4.0 * chain.lattice.n as f64),
        )
        .map_err(run_err)?;
        for &m in &chain.masses {
            let mut j_worst = 0.0f64;
            let mut k_worst = 0.0f64;
            for _ in 0..chain.vectors {
                let f = random_lattice_vector(&mut rng, lattice, m, chain.modes_per_vector)?;
                let norm = f.norm2().sqrt();
                let jf = j_transform(&f, m).map_err(run_err)?;
                j_worst = j_worst.max((jf.norm2().sqrt() - norm).abs() / norm);
                let state = synthesize(&jf, &grid, 0.0).map_err(run_err)?;
                let ip = kg_inner_product(&state, &state, &MetricField::Minkowski, &grid)
                    .map_err(run_err)?;
                k_worst =
                    k_worst.max((ip - Complex64::new(jf.norm2(), 0.0)).norm() / jf.norm2());
            }
            checks.push(CheckRecord::le(&format!("j_isometry_m{m}"), j_worst, chain.j_tol));
            checks.push(CheckRecord::le(&format!("kg_isometry_m{m}"), k_worst, chain.k_tol));
        }
    }
    Ok((checks, tables))
}

// ---------------------------------------------------------------------------
// fock
// ---------------------------------------------------------------------------

fn run_fock(s: &FockScenario, seed: u64) -> Result<(Vec<CheckRecord>, Vec<Table>), CliError> {
    let modes: Vec<[f64; 3]> = (0..s.modes).map(|k| [k as f64 * s.dp, 0.0, 0.0]).collect();
    let space =
        FockSpace::new(s.system.clone(), modes, s.cutoff, s.dp).map_err(run_err)?;
    let slots = space.slots.len();
    let mut rng = rng_from_seed(seed);
    let mut checks = Vec::new();

    for name in &s.checks {
        match name.as_str() {
            "ccr" => {
                let report = check_canonical_relations(&space);
                checks.push(CheckRecord::le(
                    "canonical_exact_defect",
                    report.exact_defect,
                    s.exact_tol,
                ));
                checks.push(CheckRecord::le(
                    "canonical_product_defect",
                    report.product_defect,
                    s.product_tol,
                ));
            }
            "gamma" => {
                let u = random_unitary(&mut rng, slots);
                let v = random_unitary(&mut rng, slots);
                let gu = second_quantize(&space, &u).map_err(run_err)?;
                let gv = second_quantize(&space, &v).map_err(run_err)?;
                let guv = second_quantize(&space, &(&u * &v)).map_err(run_err)?;
                checks.push(CheckRecord::le(
                    "gamma_functorial",
                    gu.mul(&gv).max_abs_diff(&guv),
                    s.gamma_tol,
                ));
                checks.push(CheckRecord::le(
                    "gamma_unitary",
                    gu.adjoint()
                        .mul(&gu)
                        .max_abs_diff(&OperatorMatrix::identity(space.dim())),
                    s.gamma_tol,
                ));
                let mut vac = (gu.get(0, 0) - Complex64::new(1.0, 0.0)).norm();
                for r in 1..space.dim() {
                    vac = vac.max(gu.get(r, 0).norm());
                }
                checks.push(CheckRecord::le("gamma_vacuum", vac, s.gamma_tol));
            }
            "spectrum" => {
                let u = random_unitary(&mut rng, slots);
                let w = second_quantize(&space, &u).map_err(run_err)?;
                let h0 = space.free_hamiltonian();
                let field = s
                    .system
                    .particles
                    .iter()
                    .find(|p| p.conj == p.name)
                    .map(|p| {
                        let hvec = random_complex_vector(&mut rng, s.modes);
                        smeared_field(&space, &p.name, &hvec, 0.0)
                    })
                    .transpose()
                    .map_err(run_err)?;
                let mut ops = vec![h0.clone()];
                if let Some(phi) = &field {
                    ops.push(phi.clone());
                }
                let moved = transport_representation(&w, &ops).map_err(run_err)?;
                checks.push(CheckRecord::le(
                    "hamiltonian_spectrum_drift",
                    moved.spectrum_defects[0].unwrap_or(f64::MAX),
                    s.spectrum_tol,
                ));
                if let Some(phi) = &field {
                    checks.push(CheckRecord::le(
                        "field_spectrum_drift",
                        moved.spectrum_defects[1].unwrap_or(f64::MAX),
                        s.spectrum_tol,
                    ));
                    let before = hermitian_spectrum(&commutator(&h0, phi).scaled(Complex64::i()))
                        .map_err(run_err)?;
                    let after = hermitian_spectrum(
                        &commutator(&moved.ops[0], &moved.ops[1]).scaled(Complex64::i()),
                    )
                    .map_err(run_err)?;
                    checks.push(CheckRecord::le(
                        "commutator_spectrum_drift",
                        spectrum_defect(&before, &after),
                        s.spectrum_tol,
                    ));
                }
            }
            "registry" => {
                let u1 = random_unitary(&mut rng, slots);
                let u2 = random_unitary(&mut rng, slots);
                let record = TheoryRecord {
                    masses: s.system.particles.iter().map(|p| p.mass).collect(),
                    couplings: vec![],
                };
                let mut reg = CategoryRegistry::new();
                for e in [1.0, 2.0, 4.0] {
                    reg.add_theory(e, record.clone()).map_err(run_err)?;
                    reg.add_morphism(e, e, OperatorMatrix::identity(space.dim()))
                        .map_err(run_err)?;
                }
                reg.add_morphism(1.0, 2.0, second_quantize(&space, &u1).map_err(run_err)?)
                    .map_err(run_err)?;
                reg.add_morphism(2.0, 4.0, second_quantize(&space, &u2).map_err(run_err)?)
                    .map_err(run_err)?;
                reg.add_morphism(
                    1.0,
                    4.0,
                    second_quantize(&space, &(&u2 * &u1)).map_err(run_err)?,
                )
                .map_err(run_err)?;
                let report = reg.check_groupoid(s.registry_tol);
                checks.push(CheckRecord::le(
                    "groupoid_identity",
                    report.identity_defect,
                    s.registry_tol,
                ));
                checks.push(CheckRecord::le(
                    "groupoid_composition",
                    report.composition_defect,
                    s.registry_tol,
                ));
            }
            other => {
                return Err(CliError::Schema(format!("unknown check `{other}`")));
            }
        }
    }
    Ok((checks, Vec::new()))
}

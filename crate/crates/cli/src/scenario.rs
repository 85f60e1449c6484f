//! Scenario file schema.
//!
//! A scenario is a single JSON object whose `kind` field selects the
//! pipeline. Unknown fields are rejected so that typos surface as schema
//! violations instead of silently running with defaults.

use serde::{Deserialize, Serialize};

use regularframe_core::fock::ParticleSystem;
use regularframe_core::kg::GridSpec;
use regularframe_core::mass_shell::{MomentumRegion, PacketSpec, QuadratureSpec};
use regularframe_core::metric::MetricField;

use crate::CliError;

fn default_seed() -> u64 {
    0
}

fn default_lattice_per_axis() -> usize {
    5
}

fn default_line_points() -> usize {
    50
}

fn default_coverage() -> f64 {
    1.0
}

fn default_origin_tol() -> f64 {
    1e-8
}

fn default_r_cap() -> f64 {
    1.0
}

fn default_vectors() -> usize {
    20
}

fn default_modes_per_vector() -> usize {
    6
}

fn default_dp() -> f64 {
    1.0
}

fn default_fock_checks() -> Vec<String> {
    ["ccr", "gamma", "spectrum", "registry"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_exact_tol() -> f64 {
    1e-15
}

fn default_product_tol() -> f64 {
    1e-12
}

fn default_gamma_tol() -> f64 {
    1e-10
}

fn default_spectrum_tol() -> f64 {
    1e-9
}

fn default_registry_tol() -> f64 {
    1e-10
}

fn default_true() -> bool {
    true
}

/// Pipeline selector. Every scenario file carries one as its `kind` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Chart,
    Interpolate,
    Evolve,
    Transport,
    Shell,
    Fock,
    Suite,
}

/// Grid block shared by the evolving scenarios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridInput {
    pub extent: f64,
    pub n: usize,
    pub dim: usize,
    pub dt: f64,
}

impl GridInput {
    pub fn build(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.extent, self.n, self.dim, self.dt)
            .map_err(|e| CliError::Schema(format!("grid: {e}")))
    }
}

/// Momentum lattice block for scenarios that never step in time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeInput {
    pub extent: f64,
    pub n: usize,
    pub dim: usize,
}

fn default_max_charts() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    /// Half side of the coordinate box around the chart center.
    pub half_side: f64,
    #[serde(default = "default_lattice_per_axis")]
    pub lattice_per_axis: usize,
    /// Required covered fraction of the sample lattice.
    #[serde(default = "default_coverage")]
    pub required: f64,
    #[serde(default = "default_max_charts")]
    pub max_charts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartScenario {
    pub kind: Kind,
    pub metric: MetricField,
    /// Chart center as (t, x1, x2, x3).
    pub center: [f64; 4],
    /// Cap on the cube radius search; the chart never claims more than this.
    #[serde(default = "default_r_cap")]
    pub r_cap: f64,
    /// Max defect of g_chart(0)/scale against the Minkowski matrix.
    #[serde(default = "default_origin_tol")]
    pub origin_tol: f64,
    /// Compare the pulled-back metric against the closed-form diagonal law
    /// on the sample lattice. Only meaningful over the flat family.
    #[serde(default)]
    pub closed_form_tol: Option<f64>,
    #[serde(default)]
    pub cover: Option<CoverSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateScenario {
    pub kind: Kind,
    pub metric: MetricField,
    /// Transition window (t1, t2).
    pub window: [f64; 2],
    /// Explicit sample times; when absent a line of `line_points` spanning
    /// one window-width beyond each edge is used.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_line_points")]
    pub line_points: usize,
    /// Spatial sample points crossed with the time line.
    #[serde(default)]
    pub spatial: Vec<[f64; 3]>,
    pub tail_tol: f64,
    pub c1_tol: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSpec {
    /// Grid sizes, coarse to fine; dt is scaled with 1/n from the base grid.
    pub ns: Vec<usize>,
    /// Required observed convergence order between successive levels.
    pub order_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveScenario {
    pub kind: Kind,
    pub metric: MetricField,
    pub grid: GridInput,
    /// Initial positive-frequency packet; its mass is the field mass.
    pub packet: PacketSpec,
    /// Slice times at which the norm is compared to the initial one.
    pub times: Vec<f64>,
    pub drift_tol: f64,
    #[serde(default)]
    pub refine: Option<RefineSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportRefine {
    pub ns: Vec<usize>,
    /// Require the Gram defect to decrease strictly across levels.
    #[serde(default = "default_true")]
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportScenarioInput {
    pub kind: Kind,
    /// Late-time base metric; the run interpolates from flat across `window`.
    pub metric: MetricField,
    pub window: [f64; 2],
    pub grid: GridInput,
    pub mass: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Packet family whose Gram matrix is compared across the window.
    pub basis: Vec<PacketSpec>,
    pub gram_tol: f64,
    pub round_trip_tol: f64,
    #[serde(default)]
    pub refine: Option<TransportRefine>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureCheck {
    pub region: MomentumRegion,
    pub mass: f64,
    /// Reference value; balls fall back to the closed-form antiderivative.
    #[serde(default)]
    pub expect: Option<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub lattice: LatticeInput,
    pub masses: Vec<f64>,
    #[serde(default = "default_vectors")]
    pub vectors: usize,
    #[serde(default = "default_modes_per_vector")]
    pub modes_per_vector: usize,
    pub j_tol: f64,
    pub k_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellScenario {
    pub kind: Kind,
    #[serde(default)]
    pub measure: Vec<MeasureCheck>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    /// Isometry chain: lattice norm, shell norm after the weight map, and
    /// the field norm of the synthesized solution.
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockScenario {
    pub kind: Kind,
    pub system: ParticleSystem,
    /// Number of lattice modes k dp e_x, k = 0..modes-1, per particle.
    pub modes: usize,
    /// Total occupation cutoff.
    pub cutoff: usize,
    #[serde(default = "default_dp")]
    pub dp: f64,
    #[serde(default = "default_fock_checks")]
    pub checks: Vec<String>,
    #[serde(default = "default_exact_tol")]
    pub exact_tol: f64,
    #[serde(default = "default_product_tol")]
    pub product_tol: f64,
    #[serde(default = "default_gamma_tol")]
    pub gamma_tol: f64,
    #[serde(default = "default_spectrum_tol")]
    pub spectrum_tol: f64,
    #[serde(default = "default_registry_tol")]
    pub registry_tol: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteScenario {
    pub kind: Kind,
    /// Directory of scenario files, relative to the working directory.
    pub dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// A parsed scenario. Deserialization goes through [`parse_scenario`], which
/// dispatches on the `kind` field before handing the full text to the variant
/// struct; parsing straight from the text keeps line/column positions in
/// serde_json errors, which a tagged enum would swallow by buffering.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Scenario {
    Chart(ChartScenario),
    Interpolate(InterpolateScenario),
    Evolve(EvolveScenario),
    Transport(TransportScenarioInput),
    Shell(ShellScenario),
    Fock(FockScenario),
    Suite(SuiteScenario),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Chart(_) => "chart",
            Scenario::Interpolate(_) => "interpolate",
            Scenario::Evolve(_) => "evolve",
            Scenario::Transport(_) => "transport",
            Scenario::Shell(_) => "shell",
            Scenario::Fock(_) => "fock",
            Scenario::Suite(_) => "suite",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Scenario::Chart(s) => s.seed,
            Scenario::Interpolate(s) => s.seed,
            Scenario::Evolve(s) => s.seed,
            Scenario::Transport(s) => s.seed,
            Scenario::Shell(s) => s.seed,
            Scenario::Fock(s) => s.seed,
            Scenario::Suite(s) => s.seed,
        }
    }

    /// Structural checks beyond what serde enforces: tolerance positivity
    /// and cross-field consistency.
    pub fn validate(&self) -> Result<(), CliError> {
        fn tol(name: &str, v: f64) -> Result<(), CliError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Schema(format!("{name} must be positive and finite, got {v}")))
            }
        }
        match self {
            Scenario::Chart(s) => {
                s.metric
                    .validate()
                    .map_err(|e| CliError::Schema(format!("metric: {e}")))?;
                tol("r_cap", s.r_cap)?;
                tol("origin_tol", s.origin_tol)?;
                if let Some(t) = s.closed_form_tol {
                    tol("closed_form_tol", t)?;
                    if s.metric != MetricField::Minkowski {
                        return Err(CliError::Schema(
                            "closed_form_tol applies only to the flat family".into(),
                        ));
                    }
                }
                if let Some(c) = &s.cover {
                    tol("cover.half_side", c.half_side)?;
                    tol("cover.required", c.required)?;
                    if c.lattice_per_axis < 2 {
                        return Err(CliError::Schema(
                            "cover.lattice_per_axis must be at least 2".into(),
                        ));
                    }
                }
                Ok(())
            }
            Scenario::Interpolate(s) => {
                s.metric
                    .validate()
                    .map_err(|e| CliError::Schema(format!("metric: {e}")))?;
                if !(s.window[0] < s.window[1]) {
                    return Err(CliError::Schema(format!(
                        "window must satisfy t1 < t2, got {:?}",
                        s.window
                    )));
                }
                if s.times.is_none() && s.line_points < 2 {
                    return Err(CliError::Schema("line_points must be at least 2".into()));
                }
                tol("tail_tol", s.tail_tol)?;
                tol("c1_tol", s.c1_tol)
            }
            Scenario::Evolve(s) => {
                s.metric
                    .validate()
                    .map_err(|e| CliError::Schema(format!("metric: {e}")))?;
                s.grid.build()?;
                if s.times.is_empty() {
                    return Err(CliError::Schema("times must be nonempty".into()));
                }
                tol("drift_tol", s.drift_tol)?;
                if let Some(r) = &s.refine {
                    validate_levels(&r.ns)?;
                    tol("refine.order_min", r.order_min)?;
                }
                Ok(())
            }
            Scenario::Transport(s) => {
                s.metric
                    .validate()
                    .map_err(|e| CliError::Schema(format!("metric: {e}")))?;
                s.grid.build()?;
                if !(s.window[0] < s.window[1]) {
                    return Err(CliError::Schema(format!(
                        "window must satisfy t1 < t2, got {:?}",
                        s.window
                    )));
                }
                if s.basis.len() < 2 {
                    return Err(CliError::Schema(
                        "basis needs at least 2 packets for a Gram comparison".into(),
                    ));
                }
                for (i, p) in s.basis.iter().enumerate() {
                    if p.m != s.mass {
                        return Err(CliError::Schema(format!(
                            "basis packet {i} has mass {} but the scenario mass is {}",
                            p.m, s.mass
                        )));
                    }
                }
                tol("gram_tol", s.gram_tol)?;
                tol("round_trip_tol", s.round_trip_tol)?;
                if let Some(r) = &s.refine {
                    validate_levels(&r.ns)?;
                }
                Ok(())
            }
            Scenario::Shell(s) => {
                if s.measure.is_empty() && s.chain.is_none() {
                    return Err(CliError::Schema(
                        "shell scenario needs measure checks or a chain block".into(),
                    ));
                }
                for (i, mc) in s.measure.iter().enumerate() {
                    tol(&format!("measure[{i}].tol"), mc.tol)?;
                    if !(mc.mass.is_finite() && mc.mass >= 0.0) {
                        return Err(CliError::Schema(format!(
                            "measure[{i}].mass must be finite and >= 0"
                        )));
                    }
                    if mc.expect.is_none() && matches!(mc.region, MomentumRegion::Box { .. }) {
                        return Err(CliError::Schema(format!(
                            "measure[{i}]: box regions need an explicit expect value"
                        )));
                    }
                }
                if let Some(q) = &s.quadrature {
                    tol("quadrature.abs_tol", q.abs_tol)?;
                }
                if let Some(c) = &s.chain {
                    if c.masses.is_empty() {
                        return Err(CliError::Schema("chain.masses must be nonempty".into()));
                    }
                    if c.vectors == 0 || c.modes_per_vector == 0 {
                        return Err(CliError::Schema(
                            "chain.vectors and chain.modes_per_vector must be positive".into(),
                        ));
                    }
                    tol("chain.j_tol", c.j_tol)?;
                    tol("chain.k_tol", c.k_tol)?;
                }
                Ok(())
            }
            Scenario::Fock(s) => {
                s.system
                    .validate()
                    .map_err(|e| CliError::Schema(format!("system: {e}")))?;
                if s.modes == 0 || s.cutoff == 0 {
                    return Err(CliError::Schema("modes and cutoff must be positive".into()));
                }
                tol("dp", s.dp)?;
                if s.checks.is_empty() {
                    return Err(CliError::Schema("checks must be nonempty".into()));
                }
                for c in &s.checks {
                    if !matches!(c.as_str(), "ccr" | "gamma" | "spectrum" | "registry") {
                        return Err(CliError::Schema(format!(
                            "unknown check `{c}`; expected ccr|gamma|spectrum|registry"
                        )));
                    }
                }
                tol("exact_tol", s.exact_tol)?;
                tol("product_tol", s.product_tol)?;
                tol("gamma_tol", s.gamma_tol)?;
                tol("spectrum_tol", s.spectrum_tol)?;
                tol("registry_tol", s.registry_tol)
            }
            Scenario::Suite(s) => {
                if s.dir.is_empty() {
                    return Err(CliError::Schema("dir must be nonempty".into()));
                }
                Ok(())
            }
        }
    }
}

fn validate_levels(ns: &[usize]) -> Result<(), CliError> {
    if ns.len() < 2 {
        return Err(CliError::Schema("refinement needs at least 2 levels".into()));
    }
    for w in ns.windows(2) {
        if w[1] <= w[0] {
            return Err(CliError::Schema(format!(
                "refinement levels must increase, got {:?}",
                ns
            )));
        }
    }
    Ok(())
}

fn from_text<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Schema(format!("scenario: {e}")))
}

/// Parse and validate a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    #[derive(Deserialize)]
    struct Probe {
        kind: Kind,
    }
    let probe: Probe = from_text(text)?;
    let sc = match probe.kind {
        Kind::Chart => Scenario::Chart(from_text(text)?),
        Kind::Interpolate => Scenario::Interpolate(from_text(text)?),
        Kind::Evolve => Scenario::Evolve(from_text(text)?),
        Kind::Transport => Scenario::Transport(from_text(text)?),
        Kind::Shell => Scenario::Shell(from_text(text)?),
        Kind::Fock => Scenario::Fock(from_text(text)?),
        Kind::Suite => Scenario::Suite(from_text(text)?),
    };
    sc.validate()?;
    Ok(sc)
}

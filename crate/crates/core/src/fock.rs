//! Truncated Fock layer over lattice mode sets.
//!
//! Occupation-number states are indexed by (particle, mode) slots with a
//! shared total-occupation cutoff. The module provides sparse operators on
//! that basis, ladder algebra with Jordan-Wigner signs on fermionic slots,
//! smeared field operators, second quantization of one-particle unitaries,
//! conjugation of operator families by isometries, and a registry for
//! towers of truncated theories related by unitary identification maps.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unitarity tolerance for one-particle maps fed to [`second_quantize`].
pub const UNITARY_TOL: f64 = 1e-12;
/// Isometry tolerance for representation maps.
pub const REP_UNITARY_TOL: f64 = 1e-10;
/// Vacuum preservation tolerance for representation maps.
pub const VACUUM_TOL: f64 = 1e-10;
/// Groupoid law tolerance for registry checks.
pub const GROUPOID_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("particle table: {0}")]
    System(String),
    #[error("unknown particle `{0}`")]
    UnknownParticle(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("map is not an isometry (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("map moves the vacuum (defect {defect:.3e})")]
    VacuumMoved { defect: f64 },
    #[error("operator is not hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

/// Spin label carried along with a particle species. Purely metadata: the
/// occupation basis treats a spin component as its own particle entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SpinTag {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "-1/2")]
    MinusHalf,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "-1")]
    MinusOne,
    #[default]
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub name: String,
    /// Name of the conjugate species; equal to `name` for self-conjugate ones.
    pub conj: String,
    pub mass: f64,
    pub stats: Statistics,
    #[serde(default)]
    pub spin: SpinTag,
}

/// A finite particle table with a conjugation involution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticleSystem {
    pub particles: Vec<ParticleSpec>,
}

/// Diagnostics produced by a successful [`ParticleSystem::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub particle_count: usize,
    pub self_conjugate: Vec<String>,
}

impl ParticleSystem {
    pub fn new(particles: Vec<ParticleSpec>) -> Self {
        ParticleSystem { particles }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.particles.iter().position(|p| p.name == name)
    }

    /// Checks that conjugation is an involution preserving mass and
    /// statistics, and reports the self-conjugate species.
    pub fn validate(&self) -> Result<SystemReport, FockError> {
        if self.particles.is_empty() {
            return Err(FockError::System("empty particle table".into()));
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, p) in self.particles.iter().enumerate() {
            if p.name.is_empty() {
                return Err(FockError::System(format!("particle {i} has an empty name")));
            }
            if seen.insert(p.name.as_str(), i).is_some() {
                return Err(FockError::System(format!("duplicate particle `{}`", p.name)));
            }
            if !p.mass.is_finite() || p.mass < 0.0 {
                return Err(FockError::System(format!(
                    "particle `{}` has invalid mass {}",
                    p.name, p.mass
                )));
            }
        }
        let mut self_conjugate = Vec::new();
        for p in &self.particles {
            let j = self.index(&p.conj).ok_or_else(|| {
                FockError::System(format!(
                    "conjugate `{}` of `{}` is not in the table",
                    p.conj, p.name
                ))
            })?;
            let q = &self.particles[j];
            if q.conj != p.name {
                return Err(FockError::System(format!(
                    "conjugation is not an involution: `{}` -> `{}` -> `{}`",
                    p.name, p.conj, q.conj
                )));
            }
            if q.mass != p.mass {
                return Err(FockError::System(format!(
                    "conjugate pair `{}`/`{}` has mismatched masses {} and {}",
                    p.name, q.name, p.mass, q.mass
                )));
            }
            if q.stats != p.stats {
                return Err(FockError::System(format!(
                    "conjugate pair `{}`/`{}` has mismatched statistics",
                    p.name, q.name
                )));
            }
            if q.name == p.name {
                self_conjugate.push(p.name.clone());
            }
        }
        Ok(SystemReport {
            particle_count: self.particles.len(),
            self_conjugate,
        })
    }
}

/// One creation/annihilation slot: a (particle, mode) pair with its energy.
#[derive(Debug, Clone)]
pub struct Slot {
    pub particle: usize,
    pub mode: usize,
    pub energy: f64,
    pub fermionic: bool,
}

/// Occupation-number basis over all (particle, mode) slots, truncated to a
/// total occupation cutoff. States are enumerated in graded lexicographic
/// order (by total occupation, then ascending on the occupation tuple), so
/// the vacuum sits at index 0 and the enumeration is deterministic.
pub struct FockSpace {
    pub system: ParticleSystem,
    pub modes: Vec<[f64; 3]>,
    /// Momentum-lattice spacing used as the smearing weight in field sums.
    pub dp: f64,
    pub max_total: usize,
    pub slots: Vec<Slot>,
    basis: Vec<Vec<u8>>,
    totals: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
}

fn mode_energy(mass: f64, p: &[f64; 3]) -> f64 {
    (mass * mass + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

impl FockSpace {
    pub fn new(
        system: ParticleSystem,
        modes: Vec<[f64; 3]>,
        max_total: usize,
        dp: f64,
    ) -> Result<Self, FockError> {
        system.validate()?;
        if modes.is_empty() {
            return Err(FockError::Config("empty mode set".into()));
        }
        if modes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(FockError::Config("non-finite mode momentum".into()));
        }
        if max_total == 0 {
            return Err(FockError::Config("occupation cutoff must be at least 1".into()));
        }
        if !(dp.is_finite() && dp > 0.0) {
            return Err(FockError::Config(format!("lattice spacing {dp} must be positive")));
        }
        let mut slots = Vec::with_capacity(system.particles.len() * modes.len());
        for (pi, p) in system.particles.iter().enumerate() {
            for (mi, mode) in modes.iter().enumerate() {
                slots.push(Slot {
                    particle: pi,
                    mode: mi,
                    energy: mode_energy(p.mass, mode),
                    fermionic: p.stats == Statistics::Fermion,
                });
            }
        }
        let basis = enumerate_basis(&slots, max_total);
        if basis.len() > 1_000_000 {
            return Err(FockError::Config(format!(
                "basis of {} states is too large",
                basis.len()
            )));
        }
        let totals = basis
            .iter()
            .map(|occ| occ.iter().map(|&n| n as usize).sum())
            .collect();
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, occ)| (occ.clone(), i))
            .collect();
        Ok(FockSpace {
            system,
            modes,
            dp,
            max_total,
            slots,
            basis,
            totals,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn occupation(&self, state: usize) -> &[u8] {
        &self.basis[state]
    }

    pub fn total_occupation(&self, state: usize) -> usize {
        self.totals[state]
    }

    pub fn state_index(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn slot_index(&self, particle: usize, mode: usize) -> usize {
        particle * self.modes.len() + mode
    }

    /// Jordan-Wigner sign picked up by a ladder operator on `slot`: parity of
    /// the fermionic occupation strictly below the slot in enumeration order.
    fn jw_sign(&self, occ: &[u8], slot: usize) -> i64 {
        let mut s = 1i64;
        for i in 0..slot {
            if self.slots[i].fermionic && occ[i] == 1 {
                s = -s;
            }
        }
        s
    }

    /// Creation operator on one slot. Bosonic amplitude sqrt(n+1); states
    /// pushed past the total cutoff are dropped. Fermionic slots carry the
    /// Jordan-Wigner sign and respect exclusion.
    pub fn creator(&self, slot: usize) -> OperatorMatrix {
        assert!(slot < self.slots.len(), "slot out of range");
        let fermionic = self.slots[slot].fermionic;
        let mut op = OperatorMatrix::zeros(self.dim(), self.dim());
        for (c, occ) in self.basis.iter().enumerate() {
            if fermionic && occ[slot] == 1 {
                continue;
            }
            if self.totals[c] + 1 > self.max_total {
                continue;
            }
            let mut raised = occ.clone();
            raised[slot] += 1;
            let r = self.index[&raised];
            let amp = if fermionic {
                self.jw_sign(occ, slot) as f64
            } else {
                ((occ[slot] as u64 + 1) as f64).sqrt()
            };
            op.set(r, c, Complex64::new(amp, 0.0));
        }
        op
    }

    pub fn annihilator(&self, slot: usize) -> OperatorMatrix {
        self.creator(slot).adjoint()
    }

    /// Diagonal total-occupation operator.
    pub fn number_operator(&self) -> OperatorMatrix {
        let mut op = OperatorMatrix::zeros(self.dim(), self.dim());
        for c in 0..self.dim() {
            op.set(c, c, Complex64::new(self.totals[c] as f64, 0.0));
        }
        op
    }

    /// Diagonal free Hamiltonian: each state carries the sum of slot energies
    /// weighted by occupation.
    pub fn free_hamiltonian(&self) -> OperatorMatrix {
        let mut op = OperatorMatrix::zeros(self.dim(), self.dim());
        for (c, occ) in self.basis.iter().enumerate() {
            let mut e = 0.0;
            for (s, &n) in occ.iter().enumerate() {
                if n > 0 {
                    e += (n as f64) * self.slots[s].energy;
                }
            }
            op.set(c, c, Complex64::new(e, 0.0));
        }
        op
    }
}

fn enumerate_basis(slots: &[Slot], max_total: usize) -> Vec<Vec<u8>> {
    fn rec(
        pos: usize,
        remaining: usize,
        occ: &mut Vec<u8>,
        slots: &[Slot],
        out: &mut Vec<Vec<u8>>,
    ) {
        if pos == slots.len() {
            if remaining == 0 {
                out.push(occ.clone());
            }
            return;
        }
        let cap = if slots[pos].fermionic { 1.min(remaining) } else { remaining };
        for v in 0..=cap {
            occ[pos] = v as u8;
            rec(pos + 1, remaining - v, occ, slots, out);
        }
        occ[pos] = 0;
    }
    let mut out = Vec::new();
    let mut occ = vec![0u8; slots.len()];
    for total in 0..=max_total {
        rec(0, total, &mut occ, slots, &mut out);
    }
    out
}

/// Sparse complex matrix stored column-major. Row/column indices refer to the
/// graded occupation basis of a [`FockSpace`] (or two spaces, when the map is
/// rectangular).
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    nrows: usize,
    ncols: usize,
    cols: Vec<BTreeMap<usize, Complex64>>,
}

impl OperatorMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        OperatorMatrix {
            nrows,
            ncols,
            cols: vec![BTreeMap::new(); ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut op = Self::zeros(n, n);
        for i in 0..n {
            op.set(i, i, Complex64::new(1.0, 0.0));
        }
        op
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        assert!(row < self.nrows && col < self.ncols, "entry out of range");
        if v.re == 0.0 && v.im == 0.0 {
            self.cols[col].remove(&row);
        } else {
            self.cols[col].insert(row, v);
        }
    }

    pub fn add_to(&mut self, row: usize, col: usize, v: Complex64) {
        let cur = self.get(row, col);
        self.set(row, col, cur + v);
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.cols[col]
            .get(&row)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.ncols, "vector length mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.nrows];
        for (c, col) in self.cols.iter().enumerate() {
            let x = v[c];
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            for (&r, &a) in col {
                out[r] += a * x;
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "inner dimension mismatch");
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        for (c, rcol) in rhs.cols.iter().enumerate() {
            let mut acc: BTreeMap<usize, Complex64> = BTreeMap::new();
            for (&k, &bv) in rcol {
                for (&r, &av) in &self.cols[k] {
                    *acc.entry(r).or_insert(Complex64::new(0.0, 0.0)) += av * bv;
                }
            }
            acc.retain(|_, v| v.re != 0.0 || v.im != 0.0);
            out.cols[c] = acc;
        }
        out
    }

    /// `self + s * rhs`.
    pub fn add_scaled(&self, rhs: &Self, s: Complex64) -> Self {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols), "shape mismatch");
        let mut out = self.clone();
        for (c, rcol) in rhs.cols.iter().enumerate() {
            for (&r, &v) in rcol {
                out.add_to(r, c, s * v);
            }
        }
        out
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = Self::zeros(self.nrows, self.ncols);
        for (c, col) in self.cols.iter().enumerate() {
            for (&r, &v) in col {
                out.set(r, c, s * v);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.ncols, self.nrows);
        for (c, col) in self.cols.iter().enumerate() {
            for (&r, &v) in col {
                out.cols[r].insert(c, v.conj());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.values())
            .fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        if (self.nrows, self.ncols) != (rhs.nrows, rhs.ncols) {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for c in 0..self.ncols {
            for (&r, &v) in &self.cols[c] {
                worst = worst.max((v - rhs.get(r, c)).norm());
            }
            for (&r, &v) in &rhs.cols[c] {
                if !self.cols[c].contains_key(&r) {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, Complex64::new(0.0, 0.0));
        for (c, col) in self.cols.iter().enumerate() {
            for (&r, &v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// `a*b - b*a`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a.mul(b).add_scaled(&b.mul(a), Complex64::new(-1.0, 0.0))
}

/// Outcome of the canonical (anti)commutation audit over all slot pairs.
///
/// `exact_defect` evaluates each ladder chain with integer radicands, so the
/// two operator orderings cancel in exact arithmetic and any residual is a
/// genuine algebra violation. `product_defect` measures the same relations
/// through the floating sparse matrix products that callers actually use.
/// Both are restricted to states whose total occupation stays at least one
/// below the cutoff, where truncation cannot interfere.
#[derive(Debug, Clone, Serialize)]
pub struct CanonicalReport {
    pub exact_defect: f64,
    pub product_defect: f64,
    pub pairs: usize,
}

#[derive(Clone)]
struct PathTerm {
    occ: Vec<u8>,
    sign: i64,
    radicand: u64,
}

fn path_create(space: &FockSpace, slot: usize, t: &PathTerm) -> Option<PathTerm> {
    let total: usize = t.occ.iter().map(|&x| x as usize).sum();
    if total + 1 > space.max_total {
        return None;
    }
    let n = t.occ[slot] as u64;
    let mut out = t.clone();
    if space.slots[slot].fermionic {
        if n == 1 {
            return None;
        }
        out.sign *= space.jw_sign(&t.occ, slot);
    } else {
        out.radicand *= n + 1;
    }
    out.occ[slot] += 1;
    Some(out)
}

fn path_annihilate(space: &FockSpace, slot: usize, t: &PathTerm) -> Option<PathTerm> {
    let n = t.occ[slot] as u64;
    if n == 0 {
        return None;
    }
    let mut out = t.clone();
    if space.slots[slot].fermionic {
        out.sign *= space.jw_sign(&t.occ, slot);
    } else {
        out.radicand *= n;
    }
    out.occ[slot] -= 1;
    Some(out)
}

/// Canonical-relation defect for one slot pair, evaluated symbolically.
///
/// Uses the anticommutator when both slots are fermionic and the commutator
/// otherwise, and compares against `delta_jk` on every state with total
/// occupation at most `cutoff - 1`. Amplitude products are kept as a sign
/// and an integer radicand, so equal paths cancel exactly and the bosonic
/// diagonal reduces to sqrt((n+1)^2) - sqrt(n^2), both exact in floats.
pub fn canonical_pair_defect(space: &FockSpace, j: usize, k: usize) -> f64 {
    let fermion_pair = space.slots[j].fermionic && space.slots[k].fermionic;
    let second_sign: i64 = if fermion_pair { 1 } else { -1 };
    let mut worst = 0.0f64;
    for c in 0..space.dim() {
        if space.total_occupation(c) + 1 > space.max_total {
            continue;
        }
        let base = PathTerm {
            occ: space.occupation(c).to_vec(),
            sign: 1,
            radicand: 1,
        };
        let mut reached: BTreeMap<(Vec<u8>, u64), i64> = BTreeMap::new();
        if let Some(t) = path_create(space, k, &base).and_then(|t| path_annihilate(space, j, &t)) {
            *reached.entry((t.occ, t.radicand)).or_insert(0) += t.sign;
        }
        if let Some(t) = path_annihilate(space, j, &base).and_then(|t| path_create(space, k, &t)) {
            *reached.entry((t.occ, t.radicand)).or_insert(0) += second_sign * t.sign;
        }
        let mut coeffs: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for ((occ, rad), s) in reached {
            if s != 0 {
                *coeffs.entry(occ).or_insert(0.0) += (s as f64) * (rad as f64).sqrt();
            }
        }
        let expected = if j == k { 1.0 } else { 0.0 };
        let diag = coeffs.remove(space.occupation(c)).unwrap_or(0.0);
        worst = worst.max((diag - expected).abs());
        for v in coeffs.values() {
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Audits the full ladder algebra of a space: every slot pair, both through
/// the symbolic path evaluation and through sparse matrix products.
pub fn check_canonical_relations(space: &FockSpace) -> CanonicalReport {
    let n = space.slots.len();
    let creators: Vec<OperatorMatrix> = (0..n).map(|s| space.creator(s)).collect();
    let annihilators: Vec<OperatorMatrix> = creators.iter().map(|c| c.adjoint()).collect();
    let mut exact = 0.0f64;
    let mut product = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            exact = exact.max(canonical_pair_defect(space, j, k));
            let fermion_pair = space.slots[j].fermionic && space.slots[k].fermionic;
            let sign = if fermion_pair { 1.0 } else { -1.0 };
            let rel = annihilators[j]
                .mul(&creators[k])
                .add_scaled(&creators[k].mul(&annihilators[j]), Complex64::new(sign, 0.0));
            for c in 0..space.dim() {
                if space.total_occupation(c) + 1 > space.max_total {
                    continue;
                }
                for (&r, &v) in &rel.cols[c] {
                    let expected = if j == k && r == c { 1.0 } else { 0.0 };
                    product = product.max((v - Complex64::new(expected, 0.0)).norm());
                }
                if j == k && !rel.cols[c].contains_key(&c) {
                    product = product.max(1.0);
                }
            }
        }
    }
    CanonicalReport {
        exact_defect: exact,
        product_defect: product,
        pairs: n * n,
    }
}

/// Smeared field operator for one species at time `t`.
///
/// Per mode `k` the positive-frequency part `exp(i mu t) h_k` multiplies the
/// creator on the conjugate species' slot and the negative-frequency part
/// `exp(-i mu t) conj(h_k)` multiplies the annihilator on the species itself,
/// each weighted by `dp / sqrt(mu_k)`. For a self-conjugate species the
/// result is hermitian for every smearing vector.
pub fn smeared_field(
    space: &FockSpace,
    particle: &str,
    h: &[Complex64],
    t: f64,
) -> Result<OperatorMatrix, FockError> {
    let pi = space
        .system
        .index(particle)
        .ok_or_else(|| FockError::UnknownParticle(particle.to_string()))?;
    let ci = space
        .system
        .index(&space.system.particles[pi].conj)
        .expect("validated system has closed conjugation");
    if h.len() != space.modes.len() {
        return Err(FockError::Dimension(format!(
            "smearing vector has {} entries for {} modes",
            h.len(),
            space.modes.len()
        )));
    }
    let mut phi = OperatorMatrix::zeros(space.dim(), space.dim());
    for k in 0..space.modes.len() {
        let mu = space.slots[space.slot_index(pi, k)].energy;
        if mu <= 0.0 {
            return Err(FockError::Config(format!(
                "mode {k} of `{particle}` has zero energy; the field weight 1/sqrt(mu) diverges"
            )));
        }
        let weight = space.dp / mu.sqrt();
        let plus = Complex64::cis(mu * t) * h[k] * weight;
        let minus = Complex64::cis(-mu * t) * h[k].conj() * weight;
        phi = phi.add_scaled(&space.creator(space.slot_index(ci, k)), plus);
        phi = phi.add_scaled(&space.annihilator(space.slot_index(pi, k)), minus);
    }
    Ok(phi)
}

/// Lifts a unitary on the slot space to the occupation basis.
///
/// Each basis state is rebuilt by applying the rotated creators
/// `b_k^+ = sum_j U_jk a_j^+` in descending slot order, which reproduces the
/// Jordan-Wigner ordering used by the basis itself. The vacuum column is
/// exact, the lift is sector-preserving, unitary up to roundoff, and
/// functorial: lifting `U` then `V` matches lifting `V U`.
pub fn second_quantize(
    space: &FockSpace,
    u: &DMatrix<Complex64>,
) -> Result<OperatorMatrix, FockError> {
    let n = space.slots.len();
    if u.nrows() != n || u.ncols() != n {
        return Err(FockError::Dimension(format!(
            "one-particle map is {}x{} for {} slots",
            u.nrows(),
            u.ncols(),
            n
        )));
    }
    let gram = u.adjoint() * u;
    let mut defect = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let expected = if r == c { 1.0 } else { 0.0 };
            defect = defect.max((gram[(r, c)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    if defect > UNITARY_TOL {
        return Err(FockError::NotUnitary { defect });
    }
    let rotated: Vec<OperatorMatrix> = (0..n)
        .map(|k| {
            let mut b = OperatorMatrix::zeros(space.dim(), space.dim());
            for j in 0..n {
                let w = u[(j, k)];
                if w.re != 0.0 || w.im != 0.0 {
                    b = b.add_scaled(&space.creator(j), w);
                }
            }
            b
        })
        .collect();
    let mut out = OperatorMatrix::zeros(space.dim(), space.dim());
    for c in 0..space.dim() {
        let occ = space.occupation(c).to_vec();
        let mut v = vec![Complex64::new(0.0, 0.0); space.dim()];
        v[0] = Complex64::new(1.0, 0.0);
        let mut norm = 1.0f64;
        for k in (0..n).rev() {
            for i in 1..=occ[k] as u64 {
                v = rotated[k].apply(&v);
                norm *= (i as f64).sqrt();
            }
        }
        for (r, z) in v.into_iter().enumerate() {
            if z.re != 0.0 || z.im != 0.0 {
                out.cols[c].insert(r, z / norm);
            }
        }
    }
    Ok(out)
}

/// Sorted eigenvalues of a hermitian operator.
pub fn hermitian_spectrum(op: &OperatorMatrix) -> Result<Vec<f64>, FockError> {
    if op.nrows() != op.ncols() {
        return Err(FockError::Dimension(format!(
            "spectrum of a {}x{} matrix",
            op.nrows(),
            op.ncols()
        )));
    }
    let scale = op.max_abs().max(1.0);
    let defect = op.max_abs_diff(&op.adjoint());
    if defect > 1e-10 * scale {
        return Err(FockError::NotHermitian { defect });
    }
    let eig = op.to_dense().symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Largest gap between two sorted spectra; infinite on length mismatch.
pub fn spectrum_defect(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// An operator family conjugated by an identification map, together with the
/// eigenvalue drift of each hermitian member.
pub struct TransportedOps {
    pub ops: Vec<OperatorMatrix>,
    pub spectrum_defects: Vec<Option<f64>>,
}

/// Conjugates `ops` by `w`, after checking that `w` is an isometry on its
/// initial space and fixes the vacuum. For each hermitian member the sorted
/// spectra before and after are compared.
pub fn transport_representation(
    w: &OperatorMatrix,
    ops: &[OperatorMatrix],
) -> Result<TransportedOps, FockError> {
    let init = w.ncols();
    let gram = w.adjoint().mul(w);
    let iso_defect = gram.max_abs_diff(&OperatorMatrix::identity(init));
    if iso_defect > REP_UNITARY_TOL {
        return Err(FockError::NotUnitary { defect: iso_defect });
    }
    let mut vac_defect = (w.get(0, 0) - Complex64::new(1.0, 0.0)).norm();
    for (&r, &v) in &w.cols[0] {
        if r != 0 {
            vac_defect = vac_defect.max(v.norm());
        }
    }
    if vac_defect > VACUUM_TOL {
        return Err(FockError::VacuumMoved { defect: vac_defect });
    }
    let mut out = Vec::with_capacity(ops.len());
    let mut defects = Vec::with_capacity(ops.len());
    let wadj = w.adjoint();
    for a in ops {
        if a.nrows() != init || a.ncols() != init {
            return Err(FockError::Dimension(format!(
                "operator is {}x{} but the map starts from dimension {init}",
                a.nrows(),
                a.ncols()
            )));
        }
        let moved = w.mul(a).mul(&wadj);
        let scale = a.max_abs().max(1.0);
        let defect = if a.is_hermitian(1e-10 * scale) {
            match (hermitian_spectrum(a), hermitian_spectrum(&moved)) {
                (Ok(sa), Ok(sb)) => Some(spectrum_defect(&sa, &sb)),
                _ => None,
            }
        } else {
            None
        };
        out.push(moved);
        defects.push(defect);
    }
    Ok(TransportedOps {
        ops: out,
        spectrum_defects: defects,
    })
}

/// Parameter record attached to one truncated theory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRecord {
    pub masses: Vec<f64>,
    pub couplings: Vec<f64>,
}

/// Groupoid audit of a registry: identity morphisms against the identity
/// matrix and every composable morphism triple against the direct arrow.
#[derive(Debug, Clone, Serialize)]
pub struct GroupoidReport {
    pub identity_defect: f64,
    pub composition_defect: f64,
    pub identities_checked: usize,
    pub triples_checked: usize,
    pub pass: bool,
}

/// Registry of truncated theories keyed by an energy bound, with unitary
/// identification maps between them. Energies are compared bitwise, so keys
/// must be reproduced exactly by callers.
#[derive(Default)]
pub struct CategoryRegistry {
    theories: Vec<(f64, TheoryRecord)>,
    morphisms: Vec<(f64, f64, OperatorMatrix)>,
}

impl CategoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn theory_count(&self) -> usize {
        self.theories.len()
    }

    pub fn morphism_count(&self) -> usize {
        self.morphisms.len()
    }

    pub fn theory(&self, energy: f64) -> Option<&TheoryRecord> {
        self.theories
            .iter()
            .find(|(e, _)| *e == energy)
            .map(|(_, r)| r)
    }

    pub fn add_theory(&mut self, energy: f64, record: TheoryRecord) -> Result<(), FockError> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(FockError::Registry(format!(
                "energy bound {energy} must be positive and finite"
            )));
        }
        if self.theory(energy).is_some() {
            return Err(FockError::Registry(format!(
                "a theory at energy {energy} is already registered"
            )));
        }
        self.theories.push((energy, record));
        Ok(())
    }

    pub fn morphism(&self, from: f64, to: f64) -> Option<&OperatorMatrix> {
        self.morphisms
            .iter()
            .find(|(a, b, _)| *a == from && *b == to)
            .map(|(_, _, m)| m)
    }

    /// Registers the identification map `from -> to`. Both endpoints must be
    /// registered theories and the map must be an isometry.
    pub fn add_morphism(
        &mut self,
        from: f64,
        to: f64,
        map: OperatorMatrix,
    ) -> Result<(), FockError> {
        for e in [from, to] {
            if self.theory(e).is_none() {
                return Err(FockError::Registry(format!("no theory at energy {e}")));
            }
        }
        if self.morphism(from, to).is_some() {
            return Err(FockError::Registry(format!(
                "morphism {from} -> {to} is already registered"
            )));
        }
        let gram = map.adjoint().mul(&map);
        let defect = gram.max_abs_diff(&OperatorMatrix::identity(map.ncols()));
        if defect > REP_UNITARY_TOL {
            return Err(FockError::NotUnitary { defect });
        }
        self.morphisms.push((from, to, map));
        Ok(())
    }

    /// Checks the groupoid laws on everything registered so far.
    pub fn check_groupoid(&self, tol: f64) -> GroupoidReport {
        let mut identity_defect = 0.0f64;
        let mut identities = 0usize;
        for (a, b, m) in &self.morphisms {
            if a == b {
                identities += 1;
                if m.nrows() == m.ncols() {
                    identity_defect =
                        identity_defect.max(m.max_abs_diff(&OperatorMatrix::identity(m.nrows())));
                } else {
                    identity_defect = f64::INFINITY;
                }
            }
        }
        let mut composition_defect = 0.0f64;
        let mut triples = 0usize;
        for (a, b, first) in &self.morphisms {
            for (b2, c, second) in &self.morphisms {
                if b2 != b {
                    continue;
                }
                if let Some(direct) = self.morphism(*a, *c) {
                    triples += 1;
                    if first.nrows() == second.ncols() {
                        composition_defect =
                            composition_defect.max(second.mul(first).max_abs_diff(direct));
                    } else {
                        composition_defect = f64::INFINITY;
                    }
                }
            }
        }
        GroupoidReport {
            identity_defect,
            composition_defect,
            identities_checked: identities,
            triples_checked: triples,
            pass: identity_defect <= tol && composition_defect <= tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_util::{random_complex_vector, random_unitary, rng_from_seed};

    fn scalar(name: &str, mass: f64) -> ParticleSystem {
        ParticleSystem::new(vec![ParticleSpec {
            name: name.into(),
            conj: name.into(),
            mass,
            stats: Statistics::Boson,
            spin: SpinTag::Zero,
        }])
    }

    fn majorana(name: &str, mass: f64) -> ParticleSystem {
        ParticleSystem::new(vec![ParticleSpec {
            name: name.into(),
            conj: name.into(),
            mass,
            stats: Statistics::Fermion,
            spin: SpinTag::Half,
        }])
    }

    fn charged_pair(mass: f64) -> ParticleSystem {
        ParticleSystem::new(vec![
            ParticleSpec {
                name: "b".into(),
                conj: "bbar".into(),
                mass,
                stats: Statistics::Boson,
                spin: SpinTag::Zero,
            },
            ParticleSpec {
                name: "bbar".into(),
                conj: "b".into(),
                mass,
                stats: Statistics::Boson,
                spin: SpinTag::Zero,
            },
        ])
    }

    fn zero_modes(n: usize) -> Vec<[f64; 3]> {
        (0..n).map(|k| [k as f64, 0.0, 0.0]).collect()
    }

    #[test]
    fn particle_table_parses_from_json() {
        let text = r#"[
            { "name": "photon", "conj": "photon", "mass": 0.0, "stats": "boson", "spin": "1" },
            { "name": "e-", "conj": "e+", "mass": 0.511, "stats": "fermion", "spin": "1/2" },
            { "name": "e+", "conj": "e-", "mass": 0.511, "stats": "fermion", "spin": "-1/2" }
        ]"#;
        let system: ParticleSystem = serde_json::from_str(text).unwrap();
        let report = system.validate().unwrap();
        assert_eq!(report.particle_count, 3);
        assert_eq!(report.self_conjugate, vec!["photon".to_string()]);
        let missing_spin: ParticleSystem = serde_json::from_str(
            r#"[{ "name": "chi", "conj": "chi", "mass": 1.0, "stats": "boson" }]"#,
        )
        .unwrap();
        assert_eq!(missing_spin.particles[0].spin, SpinTag::None);
    }

    #[test]
    fn validation_rejects_broken_tables() {
        let mut broken = charged_pair(1.0);
        broken.particles[1].conj = "bbar".into();
        assert!(matches!(broken.validate(), Err(FockError::System(_))));

        let mut unequal = charged_pair(1.0);
        unequal.particles[1].mass = 2.0;
        assert!(matches!(unequal.validate(), Err(FockError::System(_))));

        let mut mixed = charged_pair(1.0);
        mixed.particles[1].stats = Statistics::Fermion;
        assert!(matches!(mixed.validate(), Err(FockError::System(_))));

        let mut dup = charged_pair(1.0);
        dup.particles[1].name = "b".into();
        assert!(matches!(dup.validate(), Err(FockError::System(_))));

        let dangling = ParticleSystem::new(vec![ParticleSpec {
            name: "x".into(),
            conj: "y".into(),
            mass: 1.0,
            stats: Statistics::Boson,
            spin: SpinTag::None,
        }]);
        assert!(matches!(dangling.validate(), Err(FockError::System(_))));
    }

    #[test]
    fn basis_counts_match_combinatorics() {
        // Bosonic: sum_t C(t + s - 1, s - 1) over totals t <= N.
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        assert_eq!(space.dim(), 1 + 4 + 10 + 20);
        // Fermionic: sum_t C(s, t).
        let space = FockSpace::new(majorana("chi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        assert_eq!(space.dim(), 1 + 4 + 6 + 4);
        // One bosonic and one fermionic slot, cutoff 2.
        let mixed = ParticleSystem::new(vec![
            ParticleSpec {
                name: "phi".into(),
                conj: "phi".into(),
                mass: 1.0,
                stats: Statistics::Boson,
                spin: SpinTag::Zero,
            },
            ParticleSpec {
                name: "chi".into(),
                conj: "chi".into(),
                mass: 1.0,
                stats: Statistics::Fermion,
                spin: SpinTag::Half,
            },
        ]);
        let space = FockSpace::new(mixed, zero_modes(1), 2, 1.0).unwrap();
        assert_eq!(space.dim(), 5);
    }

    #[test]
    fn basis_is_graded_lexicographic_with_vacuum_first() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(3), 3, 1.0).unwrap();
        assert!(space.occupation(0).iter().all(|&n| n == 0));
        for i in 1..space.dim() {
            let (a, b) = (space.occupation(i - 1), space.occupation(i));
            let (ta, tb) = (space.total_occupation(i - 1), space.total_occupation(i));
            assert!(ta < tb || (ta == tb && a < b), "order broken at {i}");
        }
        // Round trip through the index map.
        for i in 0..space.dim() {
            assert_eq!(space.state_index(space.occupation(i)), Some(i));
        }
    }

    #[test]
    fn bosonic_ladder_amplitudes_and_cutoff_drop() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(1), 2, 1.0).unwrap();
        let adag = space.creator(0);
        assert_eq!(adag.get(1, 0), Complex64::new(1.0, 0.0));
        assert_eq!(adag.get(2, 1), Complex64::new(2.0f64.sqrt(), 0.0));
        // The top state has nowhere to go: the column is dropped, not wrapped.
        assert_eq!(adag.cols[2].len(), 0);
        let a = space.annihilator(0);
        assert_eq!(a.get(0, 1), Complex64::new(1.0, 0.0));
        assert_eq!(a.get(1, 2), Complex64::new(2.0f64.sqrt(), 0.0));
    }

    #[test]
    fn fermionic_ladder_signs_and_exclusion() {
        let space = FockSpace::new(majorana("chi", 1.0), zero_modes(2), 2, 1.0).unwrap();
        let c0 = space.state_index(&[0, 0]).unwrap();
        let c01 = space.state_index(&[0, 1]).unwrap();
        let c10 = space.state_index(&[1, 0]).unwrap();
        let c11 = space.state_index(&[1, 1]).unwrap();
        let adag0 = space.creator(0);
        let adag1 = space.creator(1);
        // No sign without occupied slots below; slot 1 sees slot 0.
        assert_eq!(adag0.get(c10, c0), Complex64::new(1.0, 0.0));
        assert_eq!(adag0.get(c11, c01), Complex64::new(1.0, 0.0));
        assert_eq!(adag1.get(c11, c10), Complex64::new(-1.0, 0.0));
        // Exclusion: double creation is structurally zero.
        assert_eq!(adag0.mul(&adag0).nnz(), 0);
    }

    #[test]
    fn bosonic_relations_are_exact_on_the_guarded_subspace() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        let report = check_canonical_relations(&space);
        assert_eq!(report.pairs, 16);
        assert_eq!(report.exact_defect, 0.0);
        assert!(
            report.product_defect <= 1e-12,
            "product defect {}",
            report.product_defect
        );
    }

    #[test]
    fn fermionic_relations_are_exact_even_as_matrix_products() {
        let space = FockSpace::new(majorana("chi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        let report = check_canonical_relations(&space);
        assert_eq!(report.exact_defect, 0.0);
        // Every amplitude is a sign, so the sparse products cancel bitwise.
        assert_eq!(report.product_defect, 0.0);
        // Anticommutators of two annihilators vanish identically.
        for j in 0..4 {
            for k in 0..4 {
                let aj = space.annihilator(j);
                let ak = space.annihilator(k);
                let anti = aj.mul(&ak).add_scaled(&ak.mul(&aj), Complex64::new(1.0, 0.0));
                assert_eq!(anti.max_abs(), 0.0, "({j},{k})");
            }
        }
    }

    #[test]
    fn mixed_statistics_slots_commute() {
        let mixed = ParticleSystem::new(vec![
            ParticleSpec {
                name: "phi".into(),
                conj: "phi".into(),
                mass: 1.0,
                stats: Statistics::Boson,
                spin: SpinTag::Zero,
            },
            ParticleSpec {
                name: "chi".into(),
                conj: "chi".into(),
                mass: 0.5,
                stats: Statistics::Fermion,
                spin: SpinTag::Half,
            },
        ]);
        let space = FockSpace::new(mixed, zero_modes(2), 3, 1.0).unwrap();
        let report = check_canonical_relations(&space);
        assert_eq!(report.exact_defect, 0.0);
        assert!(report.product_defect <= 1e-12);
    }

    #[test]
    fn free_hamiltonian_hand_values() {
        // Vacuum energy is zero; a single zero-momentum unit-mass quantum
        // costs exactly 1.
        let space = FockSpace::new(scalar("phi", 1.0), vec![[0.0, 0.0, 0.0]], 2, 1.0).unwrap();
        let h = space.free_hamiltonian();
        assert_eq!(h.get(0, 0), Complex64::new(0.0, 0.0));
        let one = space.state_index(&[1]).unwrap();
        assert_eq!(h.get(one, one), Complex64::new(1.0, 0.0));
        // Two quanta at momentum (3,0,0) with mass 4: mu = 5, energy 10,
        // exactly representable so the diagonal entry is exact.
        let space = FockSpace::new(scalar("phi", 4.0), vec![[3.0, 0.0, 0.0]], 2, 1.0).unwrap();
        let h = space.free_hamiltonian();
        let two = space.state_index(&[2]).unwrap();
        assert_eq!(h.get(two, two), Complex64::new(10.0, 0.0));
    }

    #[test]
    fn free_hamiltonian_commutes_with_number_operator_exactly() {
        let space = FockSpace::new(scalar("phi", 0.7), zero_modes(3), 2, 1.0).unwrap();
        let h = space.free_hamiltonian();
        let n = space.number_operator();
        assert_eq!(commutator(&h, &n).max_abs(), 0.0);
    }

    #[test]
    fn smeared_field_matches_hand_matrix() {
        // Unit mass, zero momentum, unit smearing at t = 0: the field is
        // a + a^+ with the familiar sqrt pattern.
        let space = FockSpace::new(scalar("phi", 1.0), vec![[0.0, 0.0, 0.0]], 2, 1.0).unwrap();
        let phi = smeared_field(&space, "phi", &[Complex64::new(1.0, 0.0)], 0.0).unwrap();
        let mut expected = OperatorMatrix::zeros(3, 3);
        expected.set(1, 0, Complex64::new(1.0, 0.0));
        expected.set(0, 1, Complex64::new(1.0, 0.0));
        expected.set(2, 1, Complex64::new(2.0f64.sqrt(), 0.0));
        expected.set(1, 2, Complex64::new(2.0f64.sqrt(), 0.0));
        assert_eq!(phi.max_abs_diff(&expected), 0.0);
    }

    #[test]
    fn smeared_field_is_hermitian_for_self_conjugate_species() {
        let mut rng = rng_from_seed(401);
        let space = FockSpace::new(scalar("phi", 1.3), zero_modes(2), 2, 0.5).unwrap();
        let h = random_complex_vector(&mut rng, 2);
        let phi = smeared_field(&space, "phi", &h, 0.37).unwrap();
        assert!(
            phi.max_abs_diff(&phi.adjoint()) <= 1e-12,
            "defect {}",
            phi.max_abs_diff(&phi.adjoint())
        );
    }

    #[test]
    fn smeared_fields_of_a_conjugate_pair_are_adjoint_partners() {
        let mut rng = rng_from_seed(402);
        let space = FockSpace::new(charged_pair(1.5), zero_modes(2), 2, 0.5).unwrap();
        let h = random_complex_vector(&mut rng, 2);
        let phi = smeared_field(&space, "b", &h, 0.7).unwrap();
        let phibar = smeared_field(&space, "bbar", &h, 0.7).unwrap();
        assert!(
            phi.adjoint().max_abs_diff(&phibar) <= 1e-12,
            "defect {}",
            phi.adjoint().max_abs_diff(&phibar)
        );
    }

    #[test]
    fn smeared_field_rejects_zero_energy_modes() {
        let space = FockSpace::new(scalar("phi", 0.0), vec![[0.0, 0.0, 0.0]], 1, 1.0).unwrap();
        let err = smeared_field(&space, "phi", &[Complex64::new(1.0, 0.0)], 0.0);
        assert!(matches!(err, Err(FockError::Config(_))));
    }

    #[test]
    fn second_quantized_identity_is_the_identity() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(3), 3, 1.0).unwrap();
        let eye = DMatrix::from_diagonal_element(3, 3, Complex64::new(1.0, 0.0));
        let lifted = second_quantize(&space, &eye).unwrap();
        assert_eq!(lifted.max_abs_diff(&OperatorMatrix::identity(space.dim())), 0.0);
    }

    #[test]
    fn second_quantized_phases_multiply_per_occupation() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(2), 3, 1.0).unwrap();
        let thetas = [0.4, -1.1];
        let u = DMatrix::from_fn(2, 2, |r, c| {
            if r == c {
                Complex64::cis(thetas[r])
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let lifted = second_quantize(&space, &u).unwrap();
        for s in 0..space.dim() {
            let occ = space.occupation(s);
            let angle = occ[0] as f64 * thetas[0] + occ[1] as f64 * thetas[1];
            let expected = Complex64::cis(angle);
            assert!(
                (lifted.get(s, s) - expected).norm() <= 1e-12,
                "state {s}: {} vs {expected}",
                lifted.get(s, s)
            );
            for r in 0..space.dim() {
                if r != s {
                    assert!(lifted.get(r, s).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn second_quantization_is_functorial_and_unitary_for_bosons() {
        let mut rng = rng_from_seed(403);
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        let u = random_unitary(&mut rng, 4);
        let v = random_unitary(&mut rng, 4);
        let gu = second_quantize(&space, &u).unwrap();
        let gv = second_quantize(&space, &v).unwrap();
        let guv = second_quantize(&space, &(&u * &v)).unwrap();
        let func = gu.mul(&gv).max_abs_diff(&guv);
        assert!(func <= 1e-10, "functoriality defect {func}");
        let uni = gu
            .adjoint()
            .mul(&gu)
            .max_abs_diff(&OperatorMatrix::identity(space.dim()));
        assert!(uni <= 1e-10, "unitarity defect {uni}");
        // The vacuum column is exact regardless of the rotation.
        assert_eq!(gu.get(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(gu.cols[0].len(), 1);
    }

    #[test]
    fn second_quantization_is_functorial_for_fermions() {
        let mut rng = rng_from_seed(404);
        let space = FockSpace::new(majorana("chi", 1.0), zero_modes(4), 3, 1.0).unwrap();
        let u = random_unitary(&mut rng, 4);
        let v = random_unitary(&mut rng, 4);
        let gu = second_quantize(&space, &u).unwrap();
        let gv = second_quantize(&space, &v).unwrap();
        let guv = second_quantize(&space, &(&u * &v)).unwrap();
        let func = gu.mul(&gv).max_abs_diff(&guv);
        assert!(func <= 1e-10, "functoriality defect {func}");
        let uni = gu
            .adjoint()
            .mul(&gu)
            .max_abs_diff(&OperatorMatrix::identity(space.dim()));
        assert!(uni <= 1e-10, "unitarity defect {uni}");
    }

    #[test]
    fn second_quantize_rejects_non_unitary_input() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(2), 2, 1.0).unwrap();
        let half = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0));
        assert!(matches!(
            second_quantize(&space, &half),
            Err(FockError::NotUnitary { .. })
        ));
    }

    #[test]
    fn transported_hamiltonian_keeps_its_spectrum() {
        let mut rng = rng_from_seed(405);
        let space = FockSpace::new(scalar("phi", 1.2), zero_modes(3), 2, 1.0).unwrap();
        let w = second_quantize(&space, &random_unitary(&mut rng, 3)).unwrap();
        let h0 = space.free_hamiltonian();
        let hsmear = random_complex_vector(&mut rng, 3);
        let phi = smeared_field(&space, "phi", &hsmear, 0.0).unwrap();
        let moved = transport_representation(&w, &[h0.clone(), phi.clone()]).unwrap();
        for defect in &moved.spectrum_defects {
            let d = defect.expect("both inputs are hermitian");
            assert!(d <= 1e-9, "spectrum drift {d}");
        }
        // Pairwise commutator spectra survive conjugation as well:
        // i[H, Phi] is hermitian and its eigenvalues are representation data.
        let before = hermitian_spectrum(&commutator(&h0, &phi).scaled(Complex64::i())).unwrap();
        let after = hermitian_spectrum(
            &commutator(&moved.ops[0], &moved.ops[1]).scaled(Complex64::i()),
        )
        .unwrap();
        assert!(
            spectrum_defect(&before, &after) <= 1e-9,
            "commutator spectrum drift {}",
            spectrum_defect(&before, &after)
        );
    }

    #[test]
    fn transport_rejects_bad_maps() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(1), 2, 1.0).unwrap();
        let h = space.free_hamiltonian();
        let half = OperatorMatrix::identity(3).scaled(Complex64::new(0.5, 0.0));
        assert!(matches!(
            transport_representation(&half, &[h.clone()]),
            Err(FockError::NotUnitary { .. })
        ));
        // A swap of the vacuum with the one-quantum state is unitary but
        // moves the vacuum.
        let mut swap = OperatorMatrix::zeros(3, 3);
        swap.set(0, 1, Complex64::new(1.0, 0.0));
        swap.set(1, 0, Complex64::new(1.0, 0.0));
        swap.set(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            transport_representation(&swap, &[h]),
            Err(FockError::VacuumMoved { .. })
        ));
    }

    #[test]
    fn hermitian_spectrum_rejects_non_hermitian_input() {
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(1), 2, 1.0).unwrap();
        assert!(matches!(
            hermitian_spectrum(&space.creator(0)),
            Err(FockError::NotHermitian { .. })
        ));
    }

    #[test]
    fn registry_groupoid_laws_hold_for_lifted_rotations() {
        let mut rng = rng_from_seed(406);
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(2), 2, 1.0).unwrap();
        let record = TheoryRecord {
            masses: vec![1.0],
            couplings: vec![],
        };
        let u1 = random_unitary(&mut rng, 2);
        let u2 = random_unitary(&mut rng, 2);
        let mut reg = CategoryRegistry::new();
        for e in [1.0, 2.0, 4.0] {
            reg.add_theory(e, record.clone()).unwrap();
        }
        let eye = OperatorMatrix::identity(space.dim());
        for e in [1.0, 2.0, 4.0] {
            reg.add_morphism(e, e, eye.clone()).unwrap();
        }
        reg.add_morphism(1.0, 2.0, second_quantize(&space, &u1).unwrap())
            .unwrap();
        reg.add_morphism(2.0, 4.0, second_quantize(&space, &u2).unwrap())
            .unwrap();
        reg.add_morphism(1.0, 4.0, second_quantize(&space, &(&u2 * &u1)).unwrap())
            .unwrap();
        let report = reg.check_groupoid(GROUPOID_TOL);
        assert!(report.pass, "groupoid report {report:?}");
        assert_eq!(report.identities_checked, 3);
        assert!(report.triples_checked >= 1);
    }

    #[test]
    fn registry_detects_an_inconsistent_triangle() {
        let mut rng = rng_from_seed(407);
        let space = FockSpace::new(scalar("phi", 1.0), zero_modes(2), 2, 1.0).unwrap();
        let record = TheoryRecord {
            masses: vec![1.0],
            couplings: vec![0.1],
        };
        let u1 = random_unitary(&mut rng, 2);
        let u2 = random_unitary(&mut rng, 2);
        let u_wrong = random_unitary(&mut rng, 2);
        let mut reg = CategoryRegistry::new();
        for e in [1.0, 2.0, 4.0] {
            reg.add_theory(e, record.clone()).unwrap();
        }
        reg.add_morphism(1.0, 2.0, second_quantize(&space, &u1).unwrap())
            .unwrap();
        reg.add_morphism(2.0, 4.0, second_quantize(&space, &u2).unwrap())
            .unwrap();
        reg.add_morphism(1.0, 4.0, second_quantize(&space, &u_wrong).unwrap())
            .unwrap();
        let report = reg.check_groupoid(GROUPOID_TOL);
        assert!(!report.pass);
        assert!(report.composition_defect > 1e-3);
    }

    #[test]
    fn registry_rejects_duplicates_and_dangling_morphisms() {
        let mut reg = CategoryRegistry::new();
        let record = TheoryRecord {
            masses: vec![],
            couplings: vec![],
        };
        reg.add_theory(1.0, record.clone()).unwrap();
        assert!(matches!(
            reg.add_theory(1.0, record.clone()),
            Err(FockError::Registry(_))
        ));
        assert!(matches!(
            reg.add_theory(-1.0, record.clone()),
            Err(FockError::Registry(_))
        ));
        assert!(matches!(
            reg.add_morphism(1.0, 3.0, OperatorMatrix::identity(2)),
            Err(FockError::Registry(_))
        ));
        reg.add_theory(3.0, record).unwrap();
        reg.add_morphism(1.0, 3.0, OperatorMatrix::identity(2)).unwrap();
        assert!(matches!(
            reg.add_morphism(1.0, 3.0, OperatorMatrix::identity(2)),
            Err(FockError::Registry(_))
        ));
        assert!(matches!(
            reg.add_morphism(3.0, 1.0, OperatorMatrix::identity(2).scaled(Complex64::new(2.0, 0.0))),
            Err(FockError::NotUnitary { .. })
        ));
    }
}

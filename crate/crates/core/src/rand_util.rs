//! Seeded draws for randomized checks.
//!
//! One global seed governs every randomized audit. The generator is ChaCha8,
//! a counter-based stream cipher RNG, so draws are reproducible across
//! platforms and independent of thread scheduling.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use rand::Rng as _;
use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn int_in(rng: &mut Rng, lo: i64, hi: i64) -> i64 {
    rng.random_range(lo..=hi)
}

pub fn complex_in_disc(rng: &mut Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_complex_vector(rng: &mut Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| complex_in_disc(rng)).collect()
}

/// Haar-ish unitary: QR of a random complex matrix with the R diagonal
/// phases absorbed, deterministic for a given rng state.
pub fn random_unitary(rng: &mut Rng, n: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| complex_in_disc(rng));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Random Lorentzian matrix by congruence: L^T eta L with invertible L.
/// Sylvester's law of inertia keeps the signature (-,+,+,+).
pub fn random_lorentzian(rng: &mut Rng) -> Matrix4<f64> {
    loop {
        let l: Matrix4<f64> = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))
            + Matrix4::identity() * rng.random_range(0.5..1.5);
        if l.determinant().abs() > 0.2 {
            return l.transpose() * crate::lorentz::minkowski() * l;
        }
    }
}

//! Numerical laboratory for scalar fields on curved backgrounds.
//!
//! The crate is organized bottom-up: pointwise Lorentzian algebra
//! ([`lorentz`]), builtin metric families ([`metric`]), regular chart
//! construction via the exponential map ([`chart`]), the flat-to-curved
//! metric interpolation ([`interpolate`]), a Klein-Gordon grid solver
//! ([`kg`]), mass-shell vectors and the field synthesis map
//! ([`mass_shell`]), packet transport across the interpolation window
//! ([`transport`]), and a truncated Fock layer with representation
//! transport ([`fock`]).

pub mod chart;
pub mod fock;
pub mod interpolate;
pub mod kg;
pub mod lorentz;
pub mod mass_shell;
pub mod metric;
pub mod rand_util;
pub mod transport;

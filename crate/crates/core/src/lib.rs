//! Enantiosensitive exceptional points of a chiral molecule coupled to the
//! photoionization continuum by a three-color field.
//!
//! The reduced model is a 2×2 non-Hermitian Hamiltonian over the two bound
//! states. Its exceptional points move with the sign of the cyclic
//! three-photon element, so the two enantiomers have EPs at mirrored
//! positions in the (Δ, Ω₁₂) plane. The crate provides:
//!
//! - [`model`]: Hamiltonian, discriminant, eigensystem and the c-orthonormal
//!   adiabatic frame.
//! - [`ep`]: closed-form and Newton-refined EPs, ratio sweeps, eigengap maps
//!   and the √ε response probe.
//! - [`dynamics`]: encirclement paths, adaptive propagation, branch tracking
//!   and the asymmetric-switch experiments.
//! - [`averaging`]: molecular and field pseudoscalars and the Monte Carlo
//!   orientation average.
//! - [`io`]: run configuration, experiment dispatch and file emission.
//!
//! Everything is in atomic units (ħ = 1).

pub mod averaging;
pub mod dynamics;
pub mod ep;
pub mod error;
pub mod io;
pub mod model;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex 2-vector of bound-state amplitudes.
pub type Vec2 = [Complex64; 2];

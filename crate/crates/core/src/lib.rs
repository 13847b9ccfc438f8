//! Schrodinger-Koopman quasienergy spectra and kicked-spin ensemble dynamics
//! for discrete classical flows on the 2-torus.
//!
//! The crate is organized around the driven stroboscopic quantum system
//! `(T^2, mu, phi, C^2, U)`:
//!
//! - [`torus`]: the classical side — torus points, the cyclic CAT, Arnold CAT
//!   and Chirikov standard maps, orbits, cycles, Jacobians.
//! - [`qkick`]: the quantum side — spin states, the kicked evolution operator
//!   `U(theta)`, density matrices and their observables.
//! - [`koopman`]: spectral tools for the classical flow — Koopman operator
//!   action, Birkhoff and harmonic averages, correlation diagnostics, exact
//!   Koopman modes of the cyclic map.
//! - [`quasienergy`]: quasienergy branches anchored at fixed/cyclic points,
//!   truncated ergodic-average operators, continuation of quasienergy states,
//!   sampled fields, local and perturbative expansions, and the
//!   dynamical/geometric phase decomposition.
//! - [`ensemble`]: stroboscopic evolution of spin ensembles, density-matrix
//!   time series, and occupation fields.

pub mod ensemble;
pub mod error;
pub mod koopman;
pub mod linalg;
pub mod qkick;
pub mod quasienergy;
pub mod rng;
pub mod torus;

pub use error::{Result, SkError};

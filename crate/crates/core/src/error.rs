//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, Error)]
pub enum SkError {
    /// The Jacobian of the flow is defective (not diagonalizable) at the
    /// requested point, so eigendirection-based expansions do not apply.
    #[error("jacobian is defective (not diagonalizable) at theta = {theta:?}")]
    NonDiagonalizable { theta: [f64; 2] },

    /// A torus point with the wrong number of coordinates was passed for the
    /// configured phase-space reduction.
    #[error("dimension mismatch: reduction expects {expected} coordinates, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The supplied point is not a p-cyclic point of the flow within tolerance.
    #[error("point {theta:?} is not {p}-cyclic (distance {dist:.3e} >= tol {tol:.3e})")]
    NotCyclic {
        theta: [f64; 2],
        p: usize,
        dist: f64,
        tol: f64,
    },

    /// The two monodromy eigenvalues coincide, so branch labels are arbitrary.
    #[error("degenerate monodromy spectrum: |e1 - e2| = {gap:.3e}")]
    DegenerateSpectrum { gap: f64 },

    /// The truncated ergodic average V^(N) is numerically singular at this
    /// point, which signals a non-convergent average (e.g. inside an island
    /// of stability).
    #[error("V^(N) is numerically singular (condition number {cond:.3e})")]
    SingularV { cond: f64 },

    /// The constructed Koopman mode vanishes identically: the input observable
    /// has no component in the requested eigenspace.
    #[error("constructed Koopman mode for root index {root_index} is identically zero")]
    DegenerateMode { root_index: usize },

    /// A small denominator in an expansion formula: the flow is resonant with
    /// the quantum transition at this point.
    #[error("resonant denominator |{denom:.3e}| below threshold in expansion formula")]
    ResonantDenominator { denom: f64 },

    /// A per-step phase increment left the principal branch, so unwrapping
    /// would be a guess. Aborted instead.
    #[error("log branch jump at step {step}: increment arg {arg:.6} outside (-pi, pi)")]
    LogBranchJump { step: usize, arg: f64 },

    /// An initial-condition field carries zero weight everywhere.
    #[error("initial-condition field has empty support")]
    EmptySupport,
}

pub type Result<T> = std::result::Result<T, SkError>;

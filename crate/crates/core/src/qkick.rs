//! The quantum layer: spin states, 2x2 unitaries, the kicked evolution
//! operator, and density-matrix observables.
//!
//! The single-spin Hamiltonian is `H0 = (hbar w1 / 2) |down><down|` and each
//! kick applies `1 + (e^{-i theta1} - 1) W(theta3)` with the rank-1 kick
//! projector `W`. One stroboscopic period composes the free evolution around
//! the kick:
//!
//! ```text
//! U(theta) = D(2pi - theta2) [1 + (e^{-i theta1} - 1) W(theta3)] D(theta2)
//! D(s) = diag(1, e^{-i (w1/2w0) s})
//! ```

use crate::error::{Result, SkError};
use crate::linalg::{inner, phase_fix, vec_norm, Mat2, ONE_C, ZERO_C};
use crate::torus::TorusPoint;
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

/// Normalized state of a single spin on the basis (|up>, |down>).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub up: C64,
    pub down: C64,
}

impl SpinState {
    pub fn new(up: C64, down: C64) -> Self {
        SpinState { up, down }
    }

    pub fn basis_up() -> Self {
        SpinState::new(ONE_C, ZERO_C)
    }

    pub fn basis_down() -> Self {
        SpinState::new(ZERO_C, ONE_C)
    }

    /// (|up> + |down>) / sqrt(2)
    pub fn plus() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        SpinState::new(h, h)
    }

    pub fn from_array(v: [C64; 2]) -> Self {
        SpinState::new(v[0], v[1])
    }

    pub fn as_array(&self) -> [C64; 2] {
        [self.up, self.down]
    }

    pub fn norm(&self) -> f64 {
        vec_norm(self.as_array())
    }

    pub fn normalized(&self) -> SpinState {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero state");
        SpinState::new(self.up / n, self.down / n)
    }

    /// <self|other>
    pub fn overlap(&self, other: &SpinState) -> C64 {
        inner(self.as_array(), other.as_array())
    }

    /// Occupation probability of |up> for a normalized state.
    pub fn population_up(&self) -> f64 {
        self.up.norm_sqr()
    }

    /// Global phase fixed so the largest-magnitude component is real positive.
    pub fn phase_fixed(&self) -> SpinState {
        SpinState::from_array(phase_fix(self.as_array()))
    }
}

/// A 2x2 unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(pub Mat2);

pub const UNITARY_TOL: f64 = 1e-10;

impl Unitary2 {
    /// Validating constructor. Panics when `U^dag U = 1` fails beyond `1e-10`
    /// entrywise: a non-unitary evolution operator is a programming error.
    pub fn new(m: Mat2) -> Self {
        let defect = m.adjoint().mul(&m).sub(&Mat2::identity()).norm_max();
        assert!(
            defect <= UNITARY_TOL,
            "matrix is not unitary (defect {defect:.3e})"
        );
        Unitary2(m)
    }

    /// Constructor for matrices unitary by construction.
    pub fn unchecked(m: Mat2) -> Self {
        debug_assert!(
            m.adjoint().mul(&m).sub(&Mat2::identity()).norm_max() < 1e-8,
            "matrix is not unitary"
        );
        Unitary2(m)
    }

    pub fn identity() -> Self {
        Unitary2(Mat2::identity())
    }

    pub fn mat(&self) -> &Mat2 {
        &self.0
    }

    pub fn mul(&self, rhs: &Unitary2) -> Unitary2 {
        Unitary2(self.0.mul(&rhs.0))
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.0.adjoint().mul(&self.0).sub(&Mat2::identity()).norm_max()
    }
}

/// How the 3-torus of kick parameters (strength, delay, direction) is reduced
/// to the 2-torus driven by the classical flows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    /// Fix the kick direction: points are (theta1, theta2).
    FixTheta3(f64),
    /// Fix the kick delay: points are (theta1, theta3).
    FixTheta2(f64),
    /// No reduction: points carry all three coordinates.
    Full3D,
}

/// Parameters of the kicked-spin evolution operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickParams {
    /// omega1 / omega0: Zeeman splitting over kick-train frequency.
    pub omega_ratio: f64,
    pub reduction: Reduction,
}

impl KickParams {
    pub fn new(omega_ratio: f64, reduction: Reduction) -> Self {
        assert!(omega_ratio > 0.0, "omega_ratio must be positive");
        KickParams {
            omega_ratio,
            reduction,
        }
    }
}

/// Rank-1 Hermitian projector onto |w(theta3)> = cos t3 |up> + sin t3 |down>.
pub fn kick_projector(theta3: f64) -> Mat2 {
    let c = theta3.cos();
    let s = theta3.sin();
    Mat2::new(
        C64::new(c * c, 0.0),
        C64::new(c * s, 0.0),
        C64::new(c * s, 0.0),
        C64::new(s * s, 0.0),
    )
}

fn free_phase(omega_ratio: f64, s: f64) -> C64 {
    // e^{-i (omega_ratio / 2) s} acting on |down> only.
    C64::from_polar(1.0, -0.5 * omega_ratio * s)
}

/// The kicked evolution operator at a point of the (reduced) torus.
pub fn kick_unitary(params: &KickParams, theta: &TorusPoint) -> Result<Unitary2> {
    let (t1, t2, t3) = match (params.reduction, theta.dim()) {
        (Reduction::FixTheta3(v), 2) => (theta.x(), theta.y(), v),
        (Reduction::FixTheta2(v), 2) => (theta.x(), v, theta.y()),
        (Reduction::Full3D, 3) => (theta.coords()[0], theta.coords()[1], theta.coords()[2]),
        (Reduction::Full3D, d) => {
            return Err(SkError::DimensionMismatch { expected: 3, got: d })
        }
        (_, d) => return Err(SkError::DimensionMismatch { expected: 2, got: d }),
    };

    let kick_amp = C64::from_polar(1.0, -t1) - ONE_C;
    let w = kick_projector(t3);
    let kick = Mat2::identity().add(&w.scale(kick_amp));
    let pre = Mat2::diag(ONE_C, free_phase(params.omega_ratio, t2));
    let post = Mat2::diag(ONE_C, free_phase(params.omega_ratio, TAU - t2));
    Ok(Unitary2::unchecked(post.mul(&kick).mul(&pre)))
}

/// One stroboscopic step of a spin state.
pub fn evolve_state(u: &Unitary2, psi: &SpinState) -> SpinState {
    SpinState::from_array(u.mat().matvec(psi.as_array()))
}

/// Density matrix of a single spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2(pub Mat2);

impl DensityMatrix2 {
    /// Validating constructor. Panics unless the matrix is Hermitian with
    /// unit trace and nonnegative spectrum, all within 1e-10.
    pub fn new(m: Mat2) -> Self {
        let herm_defect = m.sub(&m.adjoint()).norm_max();
        let trace_defect = (m.trace() - ONE_C).norm();
        let (_, p_min) = m.eigenvalues_hermitian();
        assert!(
            herm_defect <= 1e-10 && trace_defect <= 1e-10 && p_min >= -1e-10,
            "invalid density matrix (hermiticity {herm_defect:.2e}, trace {trace_defect:.2e}, min eigenvalue {p_min:.2e})"
        );
        DensityMatrix2(m)
    }

    pub fn unchecked(m: Mat2) -> Self {
        DensityMatrix2(m)
    }

    pub fn pure(psi: &SpinState) -> Self {
        DensityMatrix2(Mat2::outer(psi.as_array(), psi.as_array()))
    }

    pub fn microcanonical() -> Self {
        DensityMatrix2(Mat2::diag(C64::new(0.5, 0.0), C64::new(0.5, 0.0)))
    }

    pub fn mat(&self) -> &Mat2 {
        &self.0
    }

    /// Eigenvalues clipped into [0, 1]; ensemble averaging produces harmless
    /// negative round-off that is removed here.
    pub fn probabilities(&self) -> (f64, f64) {
        let (a, b) = self.0.eigenvalues_hermitian();
        (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
    }
}

/// Von Neumann entropy in nats, with `0 ln 0 := 0`.
pub fn vn_entropy(rho: &DensityMatrix2) -> f64 {
    let (p, q) = rho.probabilities();
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(p) + term(q)
}

/// Scalar observables of the mixed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    /// Population of |up>: Re rho_00.
    pub population_up: f64,
    /// Coherence: |rho_01|.
    pub coherence: f64,
}

pub fn observables(rho: &DensityMatrix2) -> Observables {
    Observables {
        population_up: rho.0.m[0][0].re,
        coherence: rho.0.m[0][1].norm(),
    }
}

//! Classical phase space: points on the m-torus, the three map families, orbit
//! iteration, cycle verification, and Jacobian eigenstructure.

use crate::error::{Result, SkError};
use crate::linalg::ZERO_C;
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

/// A point of the torus, every coordinate reduced to the canonical
/// representative in `[0, 2pi)`. Two dimensions for all the map families;
/// three are supported for the full kick parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    coords: [f64; 3],
    dim: usize,
}

fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself when x is a tiny negative number.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new2(a: f64, b: f64) -> Self {
        TorusPoint {
            coords: [wrap(a), wrap(b), 0.0],
            dim: 2,
        }
    }

    pub fn new3(a: f64, b: f64, c: f64) -> Self {
        TorusPoint {
            coords: [wrap(a), wrap(b), wrap(c)],
            dim: 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// Coordinate-wise circular distance, max over coordinates.
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        assert_eq!(self.dim, other.dim, "torus distance needs equal dimensions");
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| {
                let d = (a - b).abs();
                d.min(TAU - d)
            })
            .fold(0.0, f64::max)
    }

    /// Shift by a raw displacement (re-canonicalized).
    pub fn offset(&self, delta: [f64; 2]) -> TorusPoint {
        assert_eq!(self.dim, 2, "offset is defined for 2-dimensional points");
        TorusPoint::new2(self.coords[0] + delta[0], self.coords[1] + delta[1])
    }
}

/// The classical flows modulating the kicks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapSpec {
    /// Continuous automorphism of the torus with matrix [[-1,1],[-1,0]];
    /// every point except the origin is 3-cyclic.
    CyclicCat,
    /// Arnold's CAT map [[1,1],[1,2]]: mixing on the whole torus.
    ArnoldCat,
    /// Chirikov standard map in composed form, with kick strength `K >= 0`.
    Standard { k: f64 },
}

impl MapSpec {
    pub fn standard(k: f64) -> Self {
        assert!(k >= 0.0, "standard map requires K >= 0");
        MapSpec::Standard { k }
    }

    pub fn label(&self) -> String {
        match self {
            MapSpec::CyclicCat => "cyclic_cat".into(),
            MapSpec::ArnoldCat => "arnold_cat".into(),
            MapSpec::Standard { k } => format!("standard_k{k}"),
        }
    }
}

/// One step of the flow. Total on canonical 2-dimensional points.
pub fn map_step(spec: MapSpec, theta: &TorusPoint) -> TorusPoint {
    assert_eq!(theta.dim(), 2, "map families act on the 2-torus");
    let (t1, t2) = (theta.x(), theta.y());
    match spec {
        MapSpec::CyclicCat => TorusPoint::new2(-t1 + t2, -t1),
        MapSpec::ArnoldCat => TorusPoint::new2(t1 + t2, t1 + 2.0 * t2),
        MapSpec::Standard { k } => {
            // Composed form: the second component uses the already-updated
            // first one.
            let p1 = wrap(t1 + k * t2.sin());
            let p2 = wrap(t2 + p1);
            TorusPoint::new2(p1, p2)
        }
    }
}

/// `[theta, phi(theta), ..., phi^n(theta)]`, length `n + 1`.
pub fn map_orbit(spec: MapSpec, theta0: &TorusPoint, n: usize) -> Vec<TorusPoint> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(*theta0);
    let mut current = *theta0;
    for _ in 0..n {
        current = map_step(spec, &current);
        orbit.push(current);
    }
    orbit
}

/// True iff `d(phi^p(theta), theta) < tol`.
pub fn verify_cycle(spec: MapSpec, theta: &TorusPoint, p: usize, tol: f64) -> bool {
    assert!(p >= 1, "cycle length must be at least 1");
    assert!(tol > 0.0, "tolerance must be positive");
    let mut current = *theta;
    for _ in 0..p {
        current = map_step(spec, &current);
    }
    current.dist(theta) < tol
}

/// Jacobian matrix of one map step at `theta`, row-major.
pub fn jacobian(spec: MapSpec, theta: &TorusPoint) -> [[f64; 2]; 2] {
    match spec {
        MapSpec::CyclicCat => [[-1.0, 1.0], [-1.0, 0.0]],
        MapSpec::ArnoldCat => [[1.0, 1.0], [1.0, 2.0]],
        MapSpec::Standard { k } => {
            let kc = k * theta.y().cos();
            [[1.0, kc], [1.0, 1.0 + kc]]
        }
    }
}

/// Eigenstructure of the one-step Jacobian.
#[derive(Debug, Clone)]
pub struct JacobianEigen {
    /// Eigenvalues of the 2x2 Jacobian.
    pub eigenvalues: [C64; 2],
    /// Principal logarithms of the eigenvalues (the local Lyapunov exponents).
    pub log_eigenvalues: [C64; 2],
    /// Unit eigenvectors, real or complex.
    pub eigenvectors: [[C64; 2]; 2],
}

const DEFECTIVE_GAP: f64 = 1e-9;

/// Eigendecomposition of a real 2x2 matrix with complex output. Errors with
/// `NonDiagonalizable` when the matrix is defective.
pub fn eigen_real2(j: [[f64; 2]; 2], theta: &TorusPoint) -> Result<JacobianEigen> {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    let (l1, l2) = if disc >= 0.0 {
        let s = disc.sqrt();
        (
            C64::new(0.5 * (tr + s), 0.0),
            C64::new(0.5 * (tr - s), 0.0),
        )
    } else {
        let s = (-disc).sqrt();
        (
            C64::new(0.5 * tr, 0.5 * s),
            C64::new(0.5 * tr, -0.5 * s),
        )
    };

    if (l1 - l2).norm() < DEFECTIVE_GAP {
        // Repeated eigenvalue: diagonalizable only if the matrix is scalar.
        let off = j[0][1].abs().max(j[1][0].abs());
        let gap = (j[0][0] - j[1][1]).abs();
        if off.max(gap) > DEFECTIVE_GAP {
            return Err(SkError::NonDiagonalizable {
                theta: [theta.x(), theta.y()],
            });
        }
    }

    let eigenvector = |l: C64| -> [C64; 2] {
        let a = C64::new(j[0][0], 0.0) - l;
        let b = C64::new(j[0][1], 0.0);
        let c = C64::new(j[1][0], 0.0);
        let d = C64::new(j[1][1], 0.0) - l;
        let cand1 = [b, -a];
        let cand2 = [d, -c];
        let n1 = cand1[0].norm_sqr() + cand1[1].norm_sqr();
        let n2 = cand2[0].norm_sqr() + cand2[1].norm_sqr();
        let v = if n1 >= n2 { cand1 } else { cand2 };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n == 0.0 {
            return [C64::new(1.0, 0.0), ZERO_C];
        }
        [v[0] / n, v[1] / n]
    };

    let v1 = eigenvector(l1);
    let v2 = if (l1 - l2).norm() < DEFECTIVE_GAP {
        // Scalar matrix: pick the complementary basis vector.
        [ZERO_C, C64::new(1.0, 0.0)]
    } else {
        eigenvector(l2)
    };

    Ok(JacobianEigen {
        eigenvalues: [l1, l2],
        log_eigenvalues: [l1.ln(), l2.ln()],
        eigenvectors: [v1, v2],
    })
}

/// Eigenstructure of the one-step Jacobian of the flow at `theta`.
pub fn jacobian_eigen(spec: MapSpec, theta: &TorusPoint) -> Result<JacobianEigen> {
    eigen_real2(jacobian(spec, theta), theta)
}

/// Jacobian of `phi^p` at `theta`: the ordered product of one-step Jacobians
/// along the cycle.
pub fn cycle_jacobian(spec: MapSpec, theta: &TorusPoint, p: usize) -> [[f64; 2]; 2] {
    let mut acc = [[1.0, 0.0], [0.0, 1.0]];
    let mut current = *theta;
    for _ in 0..p {
        let j = jacobian(spec, &current);
        acc = [
            [
                j[0][0] * acc[0][0] + j[0][1] * acc[1][0],
                j[0][0] * acc[0][1] + j[0][1] * acc[1][1],
            ],
            [
                j[1][0] * acc[0][0] + j[1][1] * acc[1][0],
                j[1][0] * acc[0][1] + j[1][1] * acc[1][1],
            ],
        ];
        current = map_step(spec, &current);
    }
    acc
}

//! Small dense complex linear algebra: everything here is 2x2 and closed-form.
//!
//! The whole quantum layer lives in C^2, so instead of pulling in a general
//! eigensolver we use the quadratic formula and explicit adjugate inverses.
//! This keeps the tolerance-critical paths (unitary products, monodromy
//! eigendecompositions, condition-number guards) short and auditable.

use num_complex::Complex64 as C64;

/// 2x2 complex matrix, row-major: `m[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[C64; 2]; 2],
}

pub const ZERO_C: C64 = C64::new(0.0, 0.0);
pub const ONE_C: C64 = C64::new(1.0, 0.0);

impl Mat2 {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn zero() -> Self {
        Mat2::new(ZERO_C, ZERO_C, ZERO_C, ZERO_C)
    }

    pub fn identity() -> Self {
        Mat2::new(ONE_C, ZERO_C, ZERO_C, ONE_C)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2::new(a, ZERO_C, ZERO_C, d)
    }

    /// Outer product |u><v| (second argument is conjugated).
    pub fn outer(u: [C64; 2], v: [C64; 2]) -> Self {
        Mat2::new(
            u[0] * v[0].conj(),
            u[0] * v[1].conj(),
            u[1] * v[0].conj(),
            u[1] * v[1].conj(),
        )
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &rhs.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn matvec(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn add(&self, rhs: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + rhs.m[0][0],
            self.m[0][1] + rhs.m[0][1],
            self.m[1][0] + rhs.m[1][0],
            self.m[1][1] + rhs.m[1][1],
        )
    }

    pub fn sub(&self, rhs: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] - rhs.m[0][0],
            self.m[0][1] - rhs.m[0][1],
            self.m[1][0] - rhs.m[1][0],
            self.m[1][1] - rhs.m[1][1],
        )
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        Mat2::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    pub fn adjoint(&self) -> Mat2 {
        Mat2::new(
            self.m[0][0].conj(),
            self.m[1][0].conj(),
            self.m[0][1].conj(),
            self.m[1][1].conj(),
        )
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Closed-form inverse via the adjugate. Returns `None` when the
    /// determinant underflows to zero.
    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d.norm() == 0.0 {
            return None;
        }
        let inv_d = ONE_C / d;
        Some(Mat2::new(
            self.m[1][1] * inv_d,
            -self.m[0][1] * inv_d,
            -self.m[1][0] * inv_d,
            self.m[0][0] * inv_d,
        ))
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Entrywise max-modulus norm.
    pub fn norm_max(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Singular values (s_max, s_min), closed form from the Gram matrix.
    pub fn singular_values(&self) -> (f64, f64) {
        let g = self.norm_fro().powi(2);
        let d = self.det().norm();
        // s+^2 + s-^2 = g, s+ s- = d
        let disc = (g * g - 4.0 * d * d).max(0.0).sqrt();
        let s_max_sq = 0.5 * (g + disc);
        let s_min_sq = 0.5 * (g - disc).max(0.0);
        (s_max_sq.sqrt(), s_min_sq.sqrt())
    }

    /// Condition number s_max / s_min; `f64::INFINITY` for singular input.
    pub fn cond(&self) -> f64 {
        let (smax, smin) = self.singular_values();
        if smin == 0.0 {
            f64::INFINITY
        } else {
            smax / smin
        }
    }

    /// Eigenvalues by the quadratic formula, in an arbitrary but
    /// deterministic order.
    pub fn eigenvalues(&self) -> (C64, C64) {
        let t = self.trace();
        let d = self.det();
        let disc = (t * t - d.scale(4.0)).sqrt();
        ((t + disc) * 0.5, (t - disc) * 0.5)
    }

    /// Eigenvector for a given eigenvalue. Picks the numerically larger of the
    /// two candidate null-space rows, normalized; for (near-)scalar matrices
    /// falls back to a basis vector.
    pub fn eigenvector(&self, lambda: C64) -> [C64; 2] {
        // Rows of (M - lambda I): (a-l, b) and (c, d-l). An eigenvector is
        // orthogonal-in-the-bilinear-sense to either row: v = (-b, a-l) works
        // when row 1 is nonzero, v = (d-l, -c) when row 2 is.
        let a = self.m[0][0] - lambda;
        let b = self.m[0][1];
        let c = self.m[1][0];
        let d = self.m[1][1] - lambda;
        let cand1 = [b, -a];
        let cand2 = [d, -c];
        let n1 = cand1[0].norm_sqr() + cand1[1].norm_sqr();
        let n2 = cand2[0].norm_sqr() + cand2[1].norm_sqr();
        let v = if n1 >= n2 { cand1 } else { cand2 };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n == 0.0 {
            // Scalar matrix: any vector is an eigenvector.
            return [ONE_C, ZERO_C];
        }
        [v[0] / n, v[1] / n]
    }

    /// Eigenvalues of a Hermitian matrix (real, descending order).
    pub fn eigenvalues_hermitian(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.m[0][0].re + self.m[1][1].re);
        let half_gap = 0.5 * (self.m[0][0].re - self.m[1][1].re);
        let r = (half_gap * half_gap + self.m[0][1].norm_sqr()).sqrt();
        (half_tr + r, half_tr - r)
    }
}

/// Inner product <u|v> with the first argument conjugated.
pub fn inner(u: [C64; 2], v: [C64; 2]) -> C64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}

pub fn vec_norm(v: [C64; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

pub fn vec_add(u: [C64; 2], v: [C64; 2]) -> [C64; 2] {
    [u[0] + v[0], u[1] + v[1]]
}

pub fn vec_sub(u: [C64; 2], v: [C64; 2]) -> [C64; 2] {
    [u[0] - v[0], u[1] - v[1]]
}

pub fn vec_scale(v: [C64; 2], s: C64) -> [C64; 2] {
    [v[0] * s, v[1] * s]
}

/// Distance between the rays spanned by two nonzero vectors:
/// min over phases of || u/|u| - e^{i a} v/|v| || = sqrt(2 - 2|<u|v>|).
pub fn ray_distance(u: [C64; 2], v: [C64; 2]) -> f64 {
    let nu = vec_norm(u);
    let nv = vec_norm(v);
    let ov = inner(u, v).norm() / (nu * nv);
    (2.0 - 2.0 * ov.min(1.0)).max(0.0).sqrt()
}

/// Fix the global phase of a vector so its largest-magnitude component is
/// real and positive. Zero vectors are returned unchanged.
pub fn phase_fix(v: [C64; 2]) -> [C64; 2] {
    let pick = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
    let n = pick.norm();
    if n == 0.0 {
        return v;
    }
    let phase = pick.conj() / n;
    [v[0] * phase, v[1] * phase]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(c(1.0, 0.3), c(-0.2, 1.1), c(0.5, -0.7), c(2.0, 0.1));
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        assert_abs_diff_eq!(id.sub(&Mat2::identity()).norm_max(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let m = Mat2::new(c(0.2, 0.9), c(1.3, -0.4), c(-0.8, 0.1), c(1.5, 0.6));
        let (l1, l2) = m.eigenvalues();
        for l in [l1, l2] {
            let v = m.eigenvector(l);
            let mv = m.matvec(v);
            let lv = vec_scale(v, l);
            assert_abs_diff_eq!(vec_norm(vec_sub(mv, lv)), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = Mat2::diag(c(3.0, 0.0), c(0.0, 0.5));
        let (smax, smin) = m.singular_values();
        assert_abs_diff_eq!(smax, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(smin, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.cond(), 6.0, epsilon = 1e-10);
    }

    #[test]
    fn phase_fix_makes_dominant_component_real() {
        let v = phase_fix([c(0.0, 0.8), c(0.3, 0.0)]);
        assert!(v[0].re > 0.0);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hermitian_eigenvalues() {
        let m = Mat2::new(c(0.75, 0.0), c(0.25, 0.0), c(0.25, 0.0), c(0.25, 0.0));
        let (p, q) = m.eigenvalues_hermitian();
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-14);
        assert!(p >= q);
        // det = p*q
        assert_abs_diff_eq!(p * q, m.det().re, epsilon = 1e-14);
    }
}

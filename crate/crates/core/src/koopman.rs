//! Classical-side spectral tools: Koopman operator action, Birkhoff and
//! harmonic (Fourier-weighted) ergodic averages, Monte-Carlo correlation
//! diagnostics, and the exact Koopman modes of the cyclic CAT map.
//!
//! For the chaotic maps the Koopman spectrum is continuous, so no point
//! eigenfunctions are fabricated: only orbit averages are exposed. The cyclic
//! CAT map is 3-periodic, so its modes are exact discrete Fourier transforms
//! over the cycle.

use crate::error::{Result, SkError};
use crate::linalg::Mat2;
use crate::rng::stream_rng;
use crate::torus::{map_orbit, map_step, MapSpec, TorusPoint};
use num_complex::Complex64 as C64;
use rand::Rng;
use std::f64::consts::TAU;
use std::sync::Arc;

/// A square-integrable observable of the classical system.
#[derive(Clone)]
pub struct Observable {
    pub label: String,
    eval: Arc<dyn Fn(&TorusPoint) -> C64 + Send + Sync>,
}

impl Observable {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(&TorusPoint) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Observable {
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    /// The Fourier character e^{i k . theta}.
    pub fn fourier(k1: i64, k2: i64) -> Self {
        Observable::new(format!("e^(i({k1} t1 + {k2} t2))"), move |theta| {
            C64::from_polar(1.0, k1 as f64 * theta.x() + k2 as f64 * theta.y())
        })
    }

    pub fn constant(c: C64) -> Self {
        Observable::new(format!("const {c}"), move |_| c)
    }

    pub fn eval(&self, theta: &TorusPoint) -> C64 {
        (self.eval)(theta)
    }
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observable({})", self.label)
    }
}

/// An eigenpair of the Koopman operator: `T mode = eigenvalue * mode` with
/// `|eigenvalue| = 1` for a conservative flow.
#[derive(Debug, Clone)]
pub struct KoopmanEigenpair {
    pub eigenvalue: C64,
    pub mode: Observable,
}

/// The Koopman operator: `(T f)(theta) = f(phi(theta))`.
pub fn koopman_apply(spec: MapSpec, f: &Observable) -> Observable {
    let inner = f.clone();
    Observable::new(format!("T[{}]", f.label), move |theta| {
        inner.eval(&map_step(spec, theta))
    })
}

/// Values that can be averaged along an orbit.
pub trait OrbitAverageable: Clone {
    fn zero() -> Self;
    fn accumulate(&mut self, weight: C64, value: &Self);
    fn finish(&mut self, inv_n: f64);
}

impl OrbitAverageable for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn accumulate(&mut self, weight: C64, value: &Self) {
        *self += weight * value;
    }
    fn finish(&mut self, inv_n: f64) {
        *self *= inv_n;
    }
}

impl OrbitAverageable for Mat2 {
    fn zero() -> Self {
        Mat2::zero()
    }
    fn accumulate(&mut self, weight: C64, value: &Self) {
        *self = self.add(&value.scale(weight));
    }
    fn finish(&mut self, inv_n: f64) {
        *self = self.scale(C64::new(inv_n, 0.0));
    }
}

/// `(1/N) sum_{n=0}^{N-1} e^{-lambda n} f(phi^n(theta0))` for any orbit
/// function with values in an averageable space. `lambda` is a Koopman
/// exponent and must be purely imaginary for a conservative flow.
pub fn orbit_harmonic_average<T: OrbitAverageable>(
    spec: MapSpec,
    f: impl Fn(&TorusPoint) -> T,
    theta0: &TorusPoint,
    lambda: C64,
    n: usize,
) -> T {
    assert!(n >= 1, "average needs at least one term");
    debug_assert!(
        lambda.re.abs() < 1e-12,
        "harmonic averages expect a purely imaginary Koopman exponent"
    );
    let step_weight = (-lambda).exp();
    let mut weight = C64::new(1.0, 0.0);
    let mut acc = T::zero();
    let mut theta = *theta0;
    for i in 0..n {
        acc.accumulate(weight, &f(&theta));
        if i + 1 < n {
            theta = map_step(spec, &theta);
            weight *= step_weight;
        }
    }
    acc.finish(1.0 / n as f64);
    acc
}

/// Birkhoff (time) average `(1/N) sum f(phi^n(theta0))`.
pub fn birkhoff_average(spec: MapSpec, f: &Observable, theta0: &TorusPoint, n: usize) -> C64 {
    harmonic_average(spec, f, theta0, C64::new(0.0, 0.0), n)
}

/// Harmonic average extracting the `lambda`-component of `f` along the orbit.
pub fn harmonic_average(
    spec: MapSpec,
    f: &Observable,
    theta0: &TorusPoint,
    lambda: C64,
    n: usize,
) -> C64 {
    orbit_harmonic_average(spec, |theta| f.eval(theta), theta0, lambda, n)
}

/// A Monte-Carlo estimate together with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: C64,
    /// Standard error of the complex mean: sqrt(Var(|z - mean|^2) / M).
    pub std_error: f64,
}

impl Estimate {
    /// |value - target| within `sigmas` standard errors, with a tiny absolute
    /// floor for estimators whose variance degenerates to zero.
    pub fn consistent_with(&self, target: C64, sigmas: f64) -> bool {
        (self.value - target).norm() <= (sigmas * self.std_error).max(1e-12)
    }
}

/// Monte-Carlo estimate of the correlation
/// `int conj(g(theta)) f(phi^t(theta)) dmu(theta)`
/// over `m` uniform samples drawn from the per-index streams of `seed`.
pub fn correlation(
    spec: MapSpec,
    f: &Observable,
    g: &Observable,
    t: usize,
    m: usize,
    seed: u64,
) -> Estimate {
    assert!(m >= 1, "need at least one sample");
    let mut sum = C64::new(0.0, 0.0);
    let mut sum_sq = 0.0;
    let mut values = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = stream_rng(seed, i as u64);
        let theta = TorusPoint::new2(rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU);
        let mut image = theta;
        for _ in 0..t {
            image = map_step(spec, &image);
        }
        let v = g.eval(&theta).conj() * f.eval(&image);
        sum += v;
        values.push(v);
    }
    let mean = sum / m as f64;
    for v in values {
        sum_sq += (v - mean).norm_sqr();
    }
    let variance = if m > 1 { sum_sq / (m - 1) as f64 } else { 0.0 };
    Estimate {
        value: mean,
        std_error: (variance / m as f64).sqrt(),
    }
}

/// Exact Koopman eigenpair of the 3-cyclic CAT map obtained by the discrete
/// Fourier transform of `g` over the cycle:
/// `mode(theta) = (1/3) sum_n e^{-2 pi i k n / 3} g(phi^n(theta))`.
pub fn cyclic_koopman_modes(g: &Observable, root_index: usize) -> Result<KoopmanEigenpair> {
    assert!(root_index < 3, "root index must be 0, 1 or 2");
    let spec = MapSpec::CyclicCat;
    let omega = TAU * root_index as f64 / 3.0;
    let eigenvalue = C64::from_polar(1.0, omega);
    let g_inner = g.clone();
    let mode = Observable::new(
        format!("dft3[{}; k={root_index}]", g.label),
        move |theta| {
            let orbit = map_orbit(spec, theta, 2);
            let mut acc = C64::new(0.0, 0.0);
            for (n, point) in orbit.iter().enumerate() {
                acc += C64::from_polar(1.0, -omega * n as f64) * g_inner.eval(point);
            }
            acc / 3.0
        },
    );

    // Probe grid: declare the mode degenerate if it vanishes identically.
    let probe = 16;
    let mut max_mag: f64 = 0.0;
    for i in 0..probe {
        for j in 0..probe {
            let theta = TorusPoint::new2(
                TAU * (i as f64 + 0.5) / probe as f64,
                TAU * (j as f64 + 0.5) / probe as f64,
            );
            max_mag = max_mag.max(mode.eval(&theta).norm());
        }
    }
    if max_mag < 1e-12 {
        return Err(SkError::DegenerateMode { root_index });
    }
    Ok(KoopmanEigenpair { eigenvalue, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constants_are_koopman_fixed() {
        let f = Observable::constant(C64::new(0.7, -0.3));
        for spec in [MapSpec::CyclicCat, MapSpec::ArnoldCat, MapSpec::standard(1.0)] {
            let tf = koopman_apply(spec, &f);
            let theta = TorusPoint::new2(1.0, 2.0);
            assert_abs_diff_eq!((tf.eval(&theta) - f.eval(&theta)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn koopman_apply_substitutes_the_arnold_row() {
        let f = Observable::fourier(1, 0);
        let tf = koopman_apply(MapSpec::ArnoldCat, &f);
        let theta = TorusPoint::new2(0.9, 2.7);
        let expect = C64::from_polar(1.0, theta.x() + theta.y());
        assert_abs_diff_eq!((tf.eval(&theta) - expect).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn cyclic_map_triple_application_is_identity() {
        let f = Observable::fourier(1, 0);
        let mut tf = f.clone();
        for _ in 0..3 {
            tf = koopman_apply(MapSpec::CyclicCat, &tf);
        }
        for s in 0..50 {
            let mut rng = stream_rng(3, s);
            let theta = TorusPoint::new2(rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU);
            assert_abs_diff_eq!((tf.eval(&theta) - f.eval(&theta)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn birkhoff_average_of_constant_is_exact() {
        let c = C64::new(0.25, 1.5);
        let f = Observable::constant(c);
        let avg = birkhoff_average(MapSpec::standard(1.1), &f, &TorusPoint::new2(0.3, 0.4), 1000);
        assert_abs_diff_eq!((avg - c).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn birkhoff_average_decays_for_arnold() {
        // Space mean of e^{i theta1} is 0; exact character orthogonality makes
        // orbit sums decay like 1/sqrt(N).
        let f = Observable::fourier(1, 0);
        let avg = birkhoff_average(
            MapSpec::ArnoldCat,
            &f,
            &TorusPoint::new2(0.7654321, 2.4321987),
            100_000,
        );
        assert!(avg.norm() < 0.02, "|avg| = {}", avg.norm());
    }

    #[test]
    fn cyclic_birkhoff_matches_closed_form() {
        // Independent oracle: the explicit three-term cycle sum
        // (1/3)(e^{i t1} + e^{i(t2 - t1)} + e^{-i t2}).
        let theta = TorusPoint::new2(1.0, 2.0);
        let f = Observable::fourier(1, 0);
        let expect = (C64::from_polar(1.0, 1.0)
            + C64::from_polar(1.0, 2.0 - 1.0)
            + C64::from_polar(1.0, -2.0))
            / 3.0;
        for n in [3, 30, 300] {
            let avg = birkhoff_average(MapSpec::CyclicCat, &f, &theta, n);
            assert_abs_diff_eq!((avg - expect).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_average_at_zero_equals_birkhoff_bitwise() {
        let f = Observable::fourier(2, -1);
        let theta = TorusPoint::new2(0.123, 4.567);
        for spec in [MapSpec::ArnoldCat, MapSpec::standard(0.97)] {
            let a = birkhoff_average(spec, &f, &theta, 500);
            let b = harmonic_average(spec, &f, &theta, C64::new(0.0, 0.0), 500);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cyclic_harmonic_average_matches_weighted_cycle_sum() {
        let theta = TorusPoint::new2(0.8, 5.1);
        let f = Observable::fourier(1, 0);
        let lambda = C64::new(0.0, TAU / 3.0);
        let orbit = map_orbit(MapSpec::CyclicCat, &theta, 2);
        let mut expect = C64::new(0.0, 0.0);
        for (n, p) in orbit.iter().enumerate() {
            expect += C64::from_polar(1.0, -TAU / 3.0 * n as f64) * f.eval(p);
        }
        expect /= 3.0;
        let avg = harmonic_average(MapSpec::CyclicCat, &f, &theta, lambda, 3 * 17);
        assert_abs_diff_eq!((avg - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn arnold_harmonic_average_has_no_point_component() {
        // Continuous Koopman spectrum: no point harmonic survives.
        let f = Observable::fourier(1, 0);
        let avg = harmonic_average(
            MapSpec::ArnoldCat,
            &f,
            &TorusPoint::new2(0.31415, 1.23456),
            C64::new(0.0, 1.0),
            100_000,
        );
        assert!(avg.norm() < 0.02, "|avg| = {}", avg.norm());
    }

    #[test]
    fn correlation_examples() {
        let one = Observable::constant(C64::new(1.0, 0.0));
        let est = correlation(MapSpec::ArnoldCat, &one, &one, 5, 100, 3);
        assert_abs_diff_eq!((est.value - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(est.std_error, 0.0, epsilon = 1e-14);

        // Fourier orthogonality: T e^{i theta1} = e^{i(theta1 + theta2)} is
        // orthogonal to e^{i theta1} under the Haar measure.
        let f = Observable::fourier(1, 0);
        let est = correlation(MapSpec::ArnoldCat, &f, &f, 1, 20_000, 4);
        assert!(est.consistent_with(C64::new(0.0, 0.0), 3.0));

        // phi^3 = id for the cyclic map: autocorrelation returns to 1.
        let est = correlation(MapSpec::CyclicCat, &f, &f, 3, 20_000, 5);
        assert!(est.consistent_with(C64::new(1.0, 0.0), 3.0));
    }

    #[test]
    fn fourier_means_vanish_under_uniform_sampling() {
        // Zero-mean property of nontrivial characters, tested at Monte-Carlo
        // accuracy 5/sqrt(M).
        let m = 100_000;
        for (k1, k2) in [(1, 0), (0, 1), (2, -3)] {
            let f = Observable::fourier(k1, k2);
            let id = Observable::constant(C64::new(1.0, 0.0));
            let est = correlation(MapSpec::ArnoldCat, &f, &id, 0, m, 6);
            assert!(est.value.norm() < 5.0 / (m as f64).sqrt());
        }
    }

    #[test]
    fn cyclic_mode_construction() {
        let one = Observable::constant(C64::new(1.0, 0.0));
        let pair = cyclic_koopman_modes(&one, 0).unwrap();
        assert_abs_diff_eq!((pair.eigenvalue - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let theta = TorusPoint::new2(0.5, 1.5);
        assert_abs_diff_eq!((pair.mode.eval(&theta) - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-13);

        // Constants have no component in the nontrivial eigenspaces.
        assert!(matches!(
            cyclic_koopman_modes(&one, 1),
            Err(SkError::DegenerateMode { root_index: 1 })
        ));
    }

    #[test]
    fn cyclic_mode_satisfies_the_eigen_relation() {
        let g = Observable::fourier(1, 0);
        for root in [1usize, 2] {
            let pair = cyclic_koopman_modes(&g, root).unwrap();
            for s in 0..1000 {
                let mut rng = stream_rng(8, s);
                let theta = TorusPoint::new2(rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU);
                let image = map_step(MapSpec::CyclicCat, &theta);
                let lhs = pair.mode.eval(&image);
                let rhs = pair.eigenvalue * pair.mode.eval(&theta);
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }
}

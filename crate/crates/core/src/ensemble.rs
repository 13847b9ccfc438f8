//! Stroboscopic evolution of N-spin ensembles with distributed kick
//! parameters: density matrices, observable time series, and binned
//! occupation fields.
//!
//! The enlarged-space state is represented as a particle ensemble
//! `(theta_i, psi_i)`; the mixed state of the spin ensemble is
//! `rho_n = (1/N) sum_i |psi_n^(i)><psi_n^(i)|`.

use crate::error::{Result, SkError};
use crate::linalg::Mat2;
use crate::qkick::{
    kick_unitary, observables, vn_entropy, DensityMatrix2, KickParams, SpinState,
};
use crate::quasienergy::{FieldMeta, SampledField};
use crate::rng::stream_rng;
use crate::torus::{map_step, MapSpec, TorusPoint};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Spatial law for the initial kick-train phases.
#[derive(Debug, Clone, Copy)]
pub enum Spatial<'a> {
    /// Uniform on an axis-aligned square of the given side length (radians).
    UniformSquare { center: TorusPoint, side: f64 },
    /// Uniform (Haar) on the whole torus.
    UniformTorus,
    /// Density proportional to the per-cell squared norm of a state field.
    FieldWeighted(&'a SampledField<SpinState>),
}

/// Law assigning the initial spin state of each member.
#[derive(Debug, Clone, Copy)]
pub enum SpinLaw<'a> {
    FixedState(SpinState),
    /// The (normalized) field state of the cell containing the member's
    /// position; invalid cells fall back to the nearest valid cell.
    FromField(&'a SampledField<SpinState>),
}

#[derive(Debug, Clone, Copy)]
pub struct InitialCondition<'a> {
    pub spatial: Spatial<'a>,
    pub spin: SpinLaw<'a>,
}

/// N pairs `(theta_i, psi_i)` evolving stroboscopically.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub members: Vec<(TorusPoint, SpinState)>,
    pub step: usize,
    pub seed: u64,
}

fn field_weights(field: &SampledField<SpinState>) -> (Vec<f64>, f64) {
    let g = field.resolution();
    let mut weights = vec![0.0; g * g];
    let mut max_w: f64 = 0.0;
    for (i, j, cell) in field.iter_cells() {
        if let Some(s) = cell {
            let w = s.up.norm_sqr() + s.down.norm_sqr();
            weights[i * g + j] = w;
            max_w = max_w.max(w);
        }
    }
    (weights, max_w)
}

/// Nearest valid cell in expanding Chebyshev rings (deterministic scan order).
fn nearest_valid_cell(
    field: &SampledField<SpinState>,
    i0: usize,
    j0: usize,
) -> Option<(usize, usize)> {
    let g = field.resolution() as isize;
    for r in 0..g {
        for di in -r..=r {
            for dj in -r..=r {
                if di.abs().max(dj.abs()) != r {
                    continue;
                }
                let i = (i0 as isize + di).rem_euclid(g) as usize;
                let j = (j0 as isize + dj).rem_euclid(g) as usize;
                if field.get(i, j).is_some() {
                    return Some((i, j));
                }
            }
        }
    }
    None
}

/// Draw N members; member `i` uses the deterministic stream `(seed, i)`, so
/// the result is independent of scheduling.
pub fn sample_ensemble(ic: &InitialCondition, n: usize, seed: u64) -> Result<EnsembleState> {
    assert!(n >= 1, "an ensemble needs at least one member");

    let weights = match ic.spatial {
        Spatial::FieldWeighted(field) => {
            let (w, max_w) = field_weights(field);
            if max_w <= 0.0 {
                return Err(SkError::EmptySupport);
            }
            Some((w, max_w))
        }
        _ => None,
    };
    if let Spatial::UniformSquare { side, .. } = ic.spatial {
        assert!(side > 0.0, "square side must be positive");
    }

    let members: Vec<(TorusPoint, SpinState)> = (0..n)
        .map(|index| {
            let mut rng = stream_rng(seed, index as u64);
            let theta = match ic.spatial {
                Spatial::UniformSquare { center, side } => center.offset([
                    side * (rng.gen::<f64>() - 0.5),
                    side * (rng.gen::<f64>() - 0.5),
                ]),
                Spatial::UniformTorus => {
                    TorusPoint::new2(rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU)
                }
                Spatial::FieldWeighted(field) => {
                    let (w, max_w) = weights.as_ref().unwrap();
                    let g = field.resolution();
                    loop {
                        let idx = rng.gen_range(0..g * g);
                        if rng.gen::<f64>() * max_w < w[idx] {
                            let (i, j) = (idx / g, idx % g);
                            let cell_size = TAU / g as f64;
                            break TorusPoint::new2(
                                (i as f64 + rng.gen::<f64>()) * cell_size,
                                (j as f64 + rng.gen::<f64>()) * cell_size,
                            );
                        }
                    }
                }
            };
            let psi = match ic.spin {
                SpinLaw::FixedState(s) => s.normalized(),
                SpinLaw::FromField(field) => {
                    let (i, j) = field.cell_of(&theta);
                    let cell = field
                        .get(i, j)
                        .or_else(|| nearest_valid_cell(field, i, j).and_then(|(a, b)| field.get(a, b)))
                        .expect("field has at least one valid cell");
                    cell.normalized()
                }
            };
            (theta, psi)
        })
        .collect();

    Ok(EnsembleState {
        members,
        step: 0,
        seed,
    })
}

/// Advance every member by `steps` kicks: `psi <- U(theta) psi`, then
/// `theta <- phi(theta)`.
pub fn evolve(
    ens: &EnsembleState,
    params: &KickParams,
    spec: MapSpec,
    steps: usize,
) -> Result<EnsembleState> {
    let mut out = ens.clone();
    evolve_in_place(&mut out, params, spec, steps)?;
    Ok(out)
}

pub fn evolve_in_place(
    ens: &mut EnsembleState,
    params: &KickParams,
    spec: MapSpec,
    steps: usize,
) -> Result<()> {
    if steps == 0 {
        return Ok(());
    }
    // Validate the reduction/dimension pairing once; members all share it.
    if let Some((theta, _)) = ens.members.first() {
        kick_unitary(params, theta)?;
    }
    ens.members.par_iter_mut().for_each(|(theta, psi)| {
        for _ in 0..steps {
            let u = kick_unitary(params, theta).expect("dimension validated above");
            *psi = SpinState::from_array(u.mat().matvec(psi.as_array()));
            *theta = map_step(spec, theta);
        }
    });
    ens.step += steps;
    Ok(())
}

/// `(1/N) sum_i |psi_i><psi_i|`, accumulated in member order so the result is
/// bit-identical for any worker count.
pub fn density_matrix(ens: &EnsembleState) -> DensityMatrix2 {
    let mut acc = Mat2::zero();
    for (_, psi) in &ens.members {
        acc = acc.add(&Mat2::outer(psi.as_array(), psi.as_array()));
    }
    DensityMatrix2::new(acc.scale(C64::new(1.0 / ens.members.len() as f64, 0.0)))
}

/// Snapshot of the mixed state at one stroboscopic step.
#[derive(Debug, Clone, Copy)]
pub struct TimeSeriesRecord {
    pub n: usize,
    pub population_up: f64,
    pub coherence: f64,
    pub entropy_nats: f64,
    pub rho: DensityMatrix2,
}

/// Per-step records of an ensemble run, step 0 included.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub records: Vec<TimeSeriesRecord>,
}

fn record(n: usize, rho: DensityMatrix2) -> TimeSeriesRecord {
    let obs = observables(&rho);
    TimeSeriesRecord {
        n,
        population_up: obs.population_up,
        coherence: obs.coherence,
        entropy_nats: vn_entropy(&rho),
        rho,
    }
}

/// Sample and evolve an ensemble, recording the mixed state at every step
/// `0..=steps`.
pub fn run_experiment(
    ic: &InitialCondition,
    params: &KickParams,
    spec: MapSpec,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<TimeSeries> {
    let mut ens = sample_ensemble(ic, n, seed)?;
    let mut records = Vec::with_capacity(steps + 1);
    records.push(record(0, density_matrix(&ens)));
    for step in 1..=steps {
        evolve_in_place(&mut ens, params, spec, 1)?;
        records.push(record(step, density_matrix(&ens)));
    }
    Ok(TimeSeries { records })
}

/// Bin members into a G x G grid and average the |up> occupation per cell.
/// Cells containing no member are absent.
pub fn final_field(
    ens: &EnsembleState,
    g: usize,
    params: &KickParams,
    spec: MapSpec,
) -> SampledField<f64> {
    let meta = FieldMeta {
        map: spec,
        kick: *params,
        branch: None,
        n_average: ens.members.len(),
    };
    let mut sums = vec![0.0; g * g];
    let mut counts = vec![0usize; g * g];
    let probe = SampledField::<f64>::empty(g, meta.clone());
    for (theta, psi) in &ens.members {
        let (i, j) = probe.cell_of(theta);
        let n2 = psi.up.norm_sqr() + psi.down.norm_sqr();
        sums[i * g + j] += psi.up.norm_sqr() / n2;
        counts[i * g + j] += 1;
    }
    let cells = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();
    SampledField::from_cells(g, cells, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkick::Reduction;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, LN_2, PI};

    fn params() -> KickParams {
        KickParams::new(2.5, Reduction::FixTheta3(FRAC_PI_4))
    }

    #[test]
    fn square_sampling_stays_inside() {
        let ic = InitialCondition {
            spatial: Spatial::UniformSquare {
                center: TorusPoint::new2(1.0, 1.0),
                side: 1e-3,
            },
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let ens = sample_ensemble(&ic, 1000, 9).unwrap();
        for (theta, psi) in &ens.members {
            assert!((theta.x() - 1.0).abs() <= 5e-4 + 1e-12);
            assert!((theta.y() - 1.0).abs() <= 5e-4 + 1e-12);
            assert_abs_diff_eq!((psi.up - psi.down).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_sampling_has_the_right_mean() {
        let ic = InitialCondition {
            spatial: Spatial::UniformTorus,
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let n = 100_000;
        let ens = sample_ensemble(&ic, n, 10).unwrap();
        let (mut mx, mut my) = (0.0, 0.0);
        for (theta, _) in &ens.members {
            mx += theta.x();
            my += theta.y();
        }
        mx /= n as f64;
        my /= n as f64;
        // Uniform on [0, 2pi): mean pi, std pi/sqrt(3N).
        let three_sigma = 3.0 * PI / (3.0 * n as f64).sqrt();
        assert!((mx - PI).abs() < three_sigma, "mean {mx}");
        assert!((my - PI).abs() < three_sigma, "mean {my}");
    }

    #[test]
    fn zero_steps_is_identity() {
        let ic = InitialCondition {
            spatial: Spatial::UniformTorus,
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let ens = sample_ensemble(&ic, 100, 11).unwrap();
        let out = evolve(&ens, &params(), MapSpec::ArnoldCat, 0).unwrap();
        assert_eq!(ens.members, out.members);
        assert_eq!(out.step, 0);
    }

    #[test]
    fn fixed_point_member_accumulates_a_pure_phase() {
        // At the Arnold fixed point the anchor of the Down branch is |down>
        // with chi = pi/2: after 4 steps the state returns to itself.
        let ens = EnsembleState {
            members: vec![(TorusPoint::new2(0.0, 0.0), SpinState::basis_down())],
            step: 0,
            seed: 0,
        };
        let out = evolve(&ens, &params(), MapSpec::ArnoldCat, 4).unwrap();
        let psi = out.members[0].1;
        // e^{-4 i chi} = e^{-2 pi i} = 1
        assert_abs_diff_eq!((psi.down - SpinState::basis_down().down).norm(), 0.0, epsilon = 1e-12);
        let one_step = evolve(&ens, &params(), MapSpec::ArnoldCat, 1).unwrap();
        assert_abs_diff_eq!(
            (one_step.members[0].1.down - C64::new(0.0, -1.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn norms_stay_unit_over_long_runs() {
        let ic = InitialCondition {
            spatial: Spatial::UniformTorus,
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let ens = sample_ensemble(&ic, 200, 12).unwrap();
        let out = evolve(&ens, &params(), MapSpec::ArnoldCat, 1000).unwrap();
        let max_dev = out
            .members
            .iter()
            .map(|(_, psi)| (psi.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-8, "max norm deviation {max_dev}");
    }

    #[test]
    fn density_matrix_examples() {
        let plus = SpinState::plus();
        let ens = EnsembleState {
            members: vec![(TorusPoint::new2(0.0, 0.0), plus); 7],
            step: 0,
            seed: 0,
        };
        let rho = density_matrix(&ens);
        assert_abs_diff_eq!(vn_entropy(&rho), 0.0, epsilon = 1e-12);

        let ens = EnsembleState {
            members: vec![
                (TorusPoint::new2(0.0, 0.0), SpinState::basis_up()),
                (TorusPoint::new2(0.0, 0.0), SpinState::basis_down()),
            ],
            step: 0,
            seed: 0,
        };
        let rho = density_matrix(&ens);
        assert_abs_diff_eq!(rho.mat().m[0][0].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.mat().m[0][1].norm(), 0.0, epsilon = 1e-14);

        let ens = EnsembleState {
            members: vec![
                (TorusPoint::new2(0.0, 0.0), SpinState::basis_up()),
                (TorusPoint::new2(0.0, 0.0), plus),
            ],
            step: 0,
            seed: 0,
        };
        let rho = density_matrix(&ens);
        assert_abs_diff_eq!(rho.mat().m[0][0].re, 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.mat().m[0][1].re, 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.mat().m[1][1].re, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn density_matrix_is_permutation_invariant() {
        let ic = InitialCondition {
            spatial: Spatial::UniformTorus,
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let mut ens = sample_ensemble(&ic, 500, 13).unwrap();
        evolve_in_place(&mut ens, &params(), MapSpec::ArnoldCat, 5).unwrap();
        let rho = density_matrix(&ens);
        ens.members.reverse();
        let rho_rev = density_matrix(&ens);
        assert!(rho.mat().sub(rho_rev.mat()).norm_max() < 1e-13);
    }

    #[test]
    fn point_supported_cyclic_ensemble_stays_pure() {
        let theta = TorusPoint::new2(1.3, 2.1);
        let ens = EnsembleState {
            members: vec![(theta, SpinState::plus()); 50],
            step: 0,
            seed: 0,
        };
        let mut ens = ens;
        for _ in 0..30 {
            evolve_in_place(&mut ens, &params(), MapSpec::CyclicCat, 1).unwrap();
            let rho = density_matrix(&ens);
            assert!(vn_entropy(&rho) < 1e-10);
            assert_abs_diff_eq!(rho.mat().trace().re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn run_experiment_records_every_step() {
        let ic = InitialCondition {
            spatial: Spatial::UniformSquare {
                center: TorusPoint::new2(1.0, 1.0),
                side: 1e-3,
            },
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let ts = run_experiment(&ic, &params(), MapSpec::CyclicCat, 500, 20, 14).unwrap();
        assert_eq!(ts.records.len(), 21);
        for (k, r) in ts.records.iter().enumerate() {
            assert_eq!(r.n, k);
            assert!((0.0..=1.0).contains(&r.population_up));
            assert!((0.0..=0.5 + 1e-12).contains(&r.coherence));
            assert!((-1e-12..=LN_2 + 1e-12).contains(&r.entropy_nats));
        }
    }

    #[test]
    fn determinism_is_independent_of_thread_count() {
        let ic = InitialCondition {
            spatial: Spatial::UniformTorus,
            spin: SpinLaw::FixedState(SpinState::plus()),
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_experiment(&ic, &params(), MapSpec::ArnoldCat, 2000, 10, 15).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.population_up, rb.population_up);
            assert_eq!(ra.coherence, rb.coherence);
            assert_eq!(ra.entropy_nats, rb.entropy_nats);
        }
    }

    #[test]
    fn final_field_bins_by_cell() {
        let theta = TorusPoint::new2(1.0, 1.0);
        let ens = EnsembleState {
            members: vec![(theta, SpinState::basis_up()); 10],
            step: 0,
            seed: 0,
        };
        let field = final_field(&ens, 16, &params(), MapSpec::ArnoldCat);
        let (i, j) = field.cell_of(&theta);
        assert_abs_diff_eq!(*field.get(i, j).unwrap(), 1.0, epsilon = 1e-14);
        let occupied: usize = field
            .iter_cells()
            .filter(|(_, _, c)| c.is_some())
            .count();
        assert_eq!(occupied, 1);
    }
}

//! Quasienergy branches, SK-mode operators, continuation of quasienergy
//! states over ergodic components, sampled fields on the torus, local and
//! perturbative expansions, and the dynamical/geometric phase decomposition.
//!
//! The central objects:
//!
//! - At a fixed point `theta*` the fundamental quasienergies are the
//!   eigenphases of `U(theta*)`; at a p-cyclic point, of the monodromy
//!   `U(phi^{p-1} theta*) ... U(theta*)` (eigenvalues `e^{-i p chi}`).
//! - The truncated ergodic average
//!   `V^(N)(theta) = (1/N) sum_n e^{i n chi} U(phi^{n-1} theta) ... U(theta)`
//!   transports the anchor eigenvector over the ergodic component:
//!   `|Z, theta> = V(theta)^{-1} V(theta* + eps) |Z, theta* + eps>`.
//! - Along an orbit the quasienergy splits into a dynamical and a geometric
//!   (Bargmann-type) part:
//!   `chi = (i/n) sum ln<a|U|a> - (i/n) sum ln<a_k|a_{k+1}>`.

use crate::error::{Result, SkError};
use crate::linalg::{inner, vec_add, vec_norm, vec_scale, Mat2, ONE_C};
use crate::qkick::{evolve_state, kick_unitary, KickParams, SpinState, Unitary2};
use crate::torus::{
    cycle_jacobian, eigen_real2, map_orbit, map_step, verify_cycle, MapSpec, TorusPoint,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Which of the two spin branches a quasienergy belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchLabel {
    Up,
    Down,
}

impl BranchLabel {
    pub fn index(self) -> usize {
        match self {
            BranchLabel::Up => 0,
            BranchLabel::Down => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchLabel::Up => "up",
            BranchLabel::Down => "down",
        }
    }
}

/// A fundamental quasienergy anchored at a fixed or cyclic point.
#[derive(Debug, Clone)]
pub struct QuasienergyBranch {
    /// Stroboscopic quasienergy phase, representative in `[0, 2pi/p)`.
    pub chi: f64,
    pub anchor_point: TorusPoint,
    pub cycle_length: usize,
    /// Unit eigenvector of the monodromy at the anchor, phase-fixed.
    pub anchor_state: SpinState,
    pub label: BranchLabel,
}

impl QuasienergyBranch {
    /// The monodromy eigenvalue `e^{-i p chi}`.
    pub fn monodromy_eigenvalue(&self) -> C64 {
        C64::from_polar(1.0, -(self.cycle_length as f64) * self.chi)
    }
}

/// Ordered product `U(phi^{p-1} theta) ... U(theta)` (no cyclicity demanded).
pub fn evolution_product(
    params: &KickParams,
    spec: MapSpec,
    theta: &TorusPoint,
    p: usize,
) -> Result<Unitary2> {
    let mut acc = Mat2::identity();
    let mut point = *theta;
    for _ in 0..p {
        let u = kick_unitary(params, &point)?;
        acc = u.mat().mul(&acc);
        point = map_step(spec, &point);
    }
    Ok(Unitary2::unchecked(acc))
}

const CYCLE_TOL: f64 = 1e-9;

/// Monodromy operator around a verified p-cycle.
pub fn monodromy(
    params: &KickParams,
    spec: MapSpec,
    theta_star: &TorusPoint,
    p: usize,
) -> Result<Unitary2> {
    assert!(p >= 1, "cycle length must be at least 1");
    if !verify_cycle(spec, theta_star, p, CYCLE_TOL) {
        let image = map_orbit(spec, theta_star, p)[p];
        return Err(SkError::NotCyclic {
            theta: [theta_star.x(), theta_star.y()],
            p,
            dist: image.dist(theta_star),
            tol: CYCLE_TOL,
        });
    }
    evolution_product(params, spec, theta_star, p)
}

const DEGENERACY_TOL: f64 = 1e-10;

/// Fundamental quasienergies and anchor eigenvectors at a fixed/cyclic point,
/// returned as `[Up, Down]`. The Up branch is the one whose anchor has the
/// larger overlap with `|up>` (ties broken by smaller chi).
pub fn fundamental_branches(
    params: &KickParams,
    spec: MapSpec,
    theta_star: &TorusPoint,
    p: usize,
) -> Result<[QuasienergyBranch; 2]> {
    let m = monodromy(params, spec, theta_star, p)?;
    let (e1, e2) = m.mat().eigenvalues();
    if (e1 - e2).norm() < DEGENERACY_TOL {
        return Err(SkError::DegenerateSpectrum {
            gap: (e1 - e2).norm(),
        });
    }
    let make = |eig: C64| -> (f64, SpinState) {
        let chi = (-eig.arg()).rem_euclid(TAU) / p as f64;
        let v = SpinState::from_array(m.mat().eigenvector(eig)).phase_fixed();
        (chi, v)
    };
    let (chi1, v1) = make(e1);
    let (chi2, v2) = make(e2);
    let o1 = v1.up.norm();
    let o2 = v2.up.norm();
    let first_is_up = if (o1 - o2).abs() < 1e-12 {
        chi1 <= chi2
    } else {
        o1 > o2
    };
    let ((chi_up, v_up), (chi_dn, v_dn)) = if first_is_up {
        ((chi1, v1), (chi2, v2))
    } else {
        ((chi2, v2), (chi1, v1))
    };
    Ok([
        QuasienergyBranch {
            chi: chi_up,
            anchor_point: *theta_star,
            cycle_length: p,
            anchor_state: v_up,
            label: BranchLabel::Up,
        },
        QuasienergyBranch {
            chi: chi_dn,
            anchor_point: *theta_star,
            cycle_length: p,
            anchor_state: v_dn,
            label: BranchLabel::Down,
        },
    ])
}

/// Truncated ergodic-average operator
/// `V^(N)(theta) = (1/N) sum_{n=0}^{N-1} e^{i n chi} Pi_n(theta)` with
/// `Pi_0 = 1`, `Pi_{n+1} = U(phi^n theta) Pi_n`.
pub fn sk_mode_operator(
    params: &KickParams,
    spec: MapSpec,
    theta: &TorusPoint,
    chi: f64,
    n: usize,
) -> Result<Mat2> {
    assert!(n >= 1, "V^(N) needs at least one term");
    let step = C64::from_polar(1.0, chi);
    let mut weight = ONE_C;
    let mut prod = Mat2::identity();
    let mut acc = Mat2::zero();
    let mut point = *theta;
    for i in 0..n {
        acc = acc.add(&prod.scale(weight));
        if i + 1 < n {
            let u = kick_unitary(params, &point)?;
            prod = u.mat().mul(&prod);
            point = map_step(spec, &point);
            weight *= step;
            if i & 0x0fff == 0x0fff {
                // keep the unit-modulus weight from drifting
                weight = weight.unscale(weight.norm());
            }
        }
    }
    Ok(acc.scale(C64::new(1.0 / n as f64, 0.0)))
}

const CONDITION_LIMIT: f64 = 1e8;

/// A continued quasienergy state with its numerical diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ContinuedState {
    /// Deliberately unnormalized: quasienergy states are normalized in the
    /// enlarged space, not pointwise.
    pub state: SpinState,
    /// Condition number of `V^(N)(theta)`.
    pub condition: f64,
    /// Norm of the continued state relative to the anchor state. Blows up
    /// where the ergodic average fails to converge (islands of stability).
    pub amplification: f64,
}

/// Shared data for continuing one quasienergy branch over an ergodic
/// component: the expanded state at `theta* + eps` pushed through
/// `V^(N)(theta* + eps)`.
#[derive(Debug, Clone)]
pub struct ContinuationAnchor {
    params: KickParams,
    spec: MapSpec,
    chi: f64,
    n: usize,
    a_bar: [C64; 2],
    eps_norm: f64,
    /// The expanded state at the offset point (useful to callers anchoring
    /// exactly there).
    pub eps_point: TorusPoint,
    pub eps_state: SpinState,
}

/// Default continuation offset: magnitude 1e-3 along the unstable Jacobian
/// eigendirection at the anchor (falls back to the first coordinate axis when
/// no real expanding direction exists).
pub fn default_epsilon_offset(spec: MapSpec, theta_star: &TorusPoint, p: usize) -> [f64; 2] {
    const EPS_MAG: f64 = 1e-3;
    if let Ok(je) = eigen_real2(cycle_jacobian(spec, theta_star, p), theta_star) {
        let mut best: Option<(f64, [C64; 2])> = None;
        for a in 0..2 {
            let l = je.eigenvalues[a];
            if l.im.abs() < 1e-12 && l.re.abs() > 1.0 + 1e-9 {
                let mag = l.re.abs();
                if best.map_or(true, |(m, _)| mag > m) {
                    best = Some((mag, je.eigenvectors[a]));
                }
            }
        }
        if let Some((_, v)) = best {
            let d = [v[0].re, v[1].re];
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if n > 1e-12 {
                return [EPS_MAG * d[0] / n, EPS_MAG * d[1] / n];
            }
        }
    }
    [EPS_MAG, 0.0]
}

impl ContinuationAnchor {
    /// `eps_offset = None` selects the default unstable-direction offset;
    /// a zero offset anchors exactly at the fixed/cyclic point.
    pub fn new(
        branch: &QuasienergyBranch,
        params: &KickParams,
        spec: MapSpec,
        eps_offset: Option<[f64; 2]>,
        n: usize,
    ) -> Result<Self> {
        let offset = eps_offset
            .unwrap_or_else(|| default_epsilon_offset(spec, &branch.anchor_point, branch.cycle_length));
        let mag = (offset[0] * offset[0] + offset[1] * offset[1]).sqrt();
        let (eps_point, eps_state_raw) = if mag == 0.0 {
            (branch.anchor_point, branch.anchor_state.as_array())
        } else {
            let expansion =
                local_expansion_matrix(params, spec, &branch.anchor_point, branch.cycle_length)?;
            let state = expansion.first_order_state(branch.label, offset);
            (branch.anchor_point.offset(offset), state)
        };
        let v_eps = sk_mode_operator(params, spec, &eps_point, branch.chi, n)?;
        let a_bar = v_eps.matvec(eps_state_raw);
        Ok(ContinuationAnchor {
            params: *params,
            spec,
            chi: branch.chi,
            n,
            a_bar,
            eps_norm: vec_norm(eps_state_raw),
            eps_point,
            eps_state: SpinState::from_array(eps_state_raw),
        })
    }

    /// Continue the branch to `theta`:
    /// `|Z, theta> = V^(N)(theta)^{-1} V^(N)(theta*+eps) |Z, theta*+eps>`.
    pub fn state_at(&self, theta: &TorusPoint) -> Result<ContinuedState> {
        let v = sk_mode_operator(&self.params, self.spec, theta, self.chi, self.n)?;
        let cond = v.cond();
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(SkError::SingularV { cond });
        }
        let x = v
            .inverse()
            .expect("finite condition number implies invertibility")
            .matvec(self.a_bar);
        Ok(ContinuedState {
            state: SpinState::from_array(x),
            condition: cond,
            amplification: vec_norm(x) / self.eps_norm,
        })
    }
}

/// One-shot continuation matching the anchored-branch construction.
pub fn continue_state(
    branch: &QuasienergyBranch,
    params: &KickParams,
    spec: MapSpec,
    theta: &TorusPoint,
    eps_offset: Option<[f64; 2]>,
    n: usize,
) -> Result<ContinuedState> {
    ContinuationAnchor::new(branch, params, spec, eps_offset, n)?.state_at(theta)
}

/// Relative eigen-relation residual
/// `||U(theta)|a,theta> - e^{-i chi}|a,phi(theta)>|| / |||a,theta>||`
/// for a continued state and its continuation at the image point.
pub fn eigen_relation_residual(
    params: &KickParams,
    spec: MapSpec,
    chi: f64,
    theta: &TorusPoint,
    state: &SpinState,
    image_state: &SpinState,
) -> Result<f64> {
    let u = kick_unitary(params, theta)?;
    let lhs = u.mat().matvec(state.as_array());
    let rhs = vec_scale(image_state.as_array(), C64::from_polar(1.0, -chi));
    Ok(vec_norm([lhs[0] - rhs[0], lhs[1] - rhs[1]]) / vec_norm(state.as_array()))
}

// ---------------------------------------------------------------------------
// Sampled fields
// ---------------------------------------------------------------------------

/// Metadata attached to a sampled field.
#[derive(Debug, Clone)]
pub struct FieldMeta {
    pub map: MapSpec,
    pub kick: KickParams,
    pub branch: Option<BranchLabel>,
    pub n_average: usize,
}

/// A G x G grid over `[0, 2pi)^2`; cell `(i, j)` is anchored at
/// `theta = (2 pi i / G, 2 pi j / G)` (corner convention). Cells where the
/// underlying computation failed carry no payload.
#[derive(Debug, Clone)]
pub struct SampledField<T> {
    g: usize,
    cells: Vec<Option<T>>,
    pub meta: FieldMeta,
}

impl<T> SampledField<T> {
    pub fn empty(g: usize, meta: FieldMeta) -> Self {
        assert!(g >= 1, "grid resolution must be at least 1");
        let mut cells = Vec::with_capacity(g * g);
        cells.resize_with(g * g, || None);
        SampledField { g, cells, meta }
    }

    pub fn from_cells(g: usize, cells: Vec<Option<T>>, meta: FieldMeta) -> Self {
        assert_eq!(cells.len(), g * g);
        SampledField { g, cells, meta }
    }

    pub fn resolution(&self) -> usize {
        self.g
    }

    pub fn cell_anchor(&self, i: usize, j: usize) -> TorusPoint {
        TorusPoint::new2(TAU * i as f64 / self.g as f64, TAU * j as f64 / self.g as f64)
    }

    /// Index of the cell containing `theta`: `floor(theta G / 2 pi)`.
    pub fn cell_of(&self, theta: &TorusPoint) -> (usize, usize) {
        let scale = self.g as f64 / TAU;
        let i = ((theta.x() * scale).floor() as usize).min(self.g - 1);
        let j = ((theta.y() * scale).floor() as usize).min(self.g - 1);
        (i, j)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&T> {
        self.cells[i * self.g + j].as_ref()
    }

    pub fn set(&mut self, i: usize, j: usize, value: Option<T>) {
        self.cells[i * self.g + j] = value;
    }

    pub fn valid_fraction(&self) -> f64 {
        let valid = self.cells.iter().filter(|c| c.is_some()).count();
        valid as f64 / self.cells.len() as f64
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, Option<&T>)> {
        let g = self.g;
        self.cells
            .iter()
            .enumerate()
            .map(move |(idx, c)| (idx / g, idx % g, c.as_ref()))
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SampledField<U> {
        SampledField {
            g: self.g,
            cells: self.cells.iter().map(|c| c.as_ref().map(&f)).collect(),
            meta: self.meta.clone(),
        }
    }
}

impl SampledField<SpinState> {
    /// Occupation probability of |up> per cell, normalized pointwise.
    pub fn occupation(&self) -> SampledField<f64> {
        self.map(|s| {
            let n2 = s.up.norm_sqr() + s.down.norm_sqr();
            if n2 > 0.0 {
                s.up.norm_sqr() / n2
            } else {
                0.0
            }
        })
    }

    /// Per-cell squared norms (the sampling weights of the enlarged-space
    /// state).
    pub fn weights(&self) -> SampledField<f64> {
        self.map(|s| s.up.norm_sqr() + s.down.norm_sqr())
    }

    /// Rescale so the mean squared norm over valid cells is 1.
    pub fn globally_normalized(&self) -> SampledField<SpinState> {
        let (sum, count) = self
            .cells
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), st| {
                (s + st.up.norm_sqr() + st.down.norm_sqr(), c + 1)
            });
        if count == 0 || sum == 0.0 {
            return self.clone();
        }
        let scale = C64::new((count as f64 / sum).sqrt(), 0.0);
        self.map(|s| SpinState::new(s.up * scale, s.down * scale))
    }
}

/// Options for quasienergy-field generation.
#[derive(Debug, Clone, Copy)]
pub struct FieldOptions {
    /// Continuation offset; `None` picks the default unstable-direction one.
    pub epsilon_offset: Option<[f64; 2]>,
    /// Cells whose continued state is amplified beyond this factor relative
    /// to the anchor are marked invalid (non-convergent ergodic average).
    pub amp_threshold: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            epsilon_offset: None,
            amp_threshold: 50.0,
        }
    }
}

/// Continue one branch to every grid cell. Per-cell failures (singular or
/// non-convergent `V^(N)`) are recorded as invalid cells, not errors.
pub fn quasienergy_field(
    branch: &QuasienergyBranch,
    params: &KickParams,
    spec: MapSpec,
    g: usize,
    n: usize,
    opts: FieldOptions,
) -> Result<SampledField<SpinState>> {
    let anchor = ContinuationAnchor::new(branch, params, spec, opts.epsilon_offset, n)?;
    let meta = FieldMeta {
        map: spec,
        kick: *params,
        branch: Some(branch.label),
        n_average: n,
    };
    let field = SampledField::<SpinState>::empty(g, meta.clone());
    let cells: Vec<Option<SpinState>> = (0..g * g)
        .into_par_iter()
        .map(|idx| {
            let theta = field.cell_anchor(idx / g, idx % g);
            match anchor.state_at(&theta) {
                Ok(cs) if cs.amplification <= opts.amp_threshold => Some(cs.state),
                _ => None,
            }
        })
        .collect();
    Ok(SampledField::from_cells(g, cells, meta))
}

// ---------------------------------------------------------------------------
// Cyclic CAT map: exact per-cycle spectra and superposed fields
// ---------------------------------------------------------------------------

/// Exact branches of the cyclic CAT map on every grid cell, with labels made
/// continuous across cells by overlap-greedy flood fill from the origin.
#[derive(Debug, Clone)]
pub struct CyclicFields {
    pub states: [SampledField<SpinState>; 2],
    pub chi: [SampledField<f64>; 2],
}

/// Per-cell fundamental branches of the cyclic CAT map (p = 3 everywhere,
/// p = 1 at the origin cell), superposed into continuous fields.
pub fn cyclic_fields(params: &KickParams, g: usize) -> Result<CyclicFields> {
    let spec = MapSpec::CyclicCat;
    let meta = |label: Option<BranchLabel>| FieldMeta {
        map: spec,
        kick: *params,
        branch: label,
        n_average: 0,
    };
    let probe = SampledField::<SpinState>::empty(g, meta(None));

    // Raw per-cell branches, labeled only by the local overlap rule.
    let raw: Vec<Option<[QuasienergyBranch; 2]>> = (0..g * g)
        .into_par_iter()
        .map(|idx| {
            let theta = probe.cell_anchor(idx / g, idx % g);
            let p = if idx == 0 { 1 } else { 3 };
            fundamental_branches(params, spec, &theta, p).ok()
        })
        .collect();

    // Flood fill from the origin cell: each newly reached cell orients its
    // branch pair to maximize overlap with the already-labeled neighbor that
    // discovered it.
    let mut order: Vec<Option<[usize; 2]>> = vec![None; g * g]; // permutation per cell
    let mut queue = std::collections::VecDeque::new();
    if raw[0].is_some() {
        order[0] = Some([0, 1]);
        queue.push_back(0usize);
    }
    while let Some(idx) = queue.pop_front() {
        let (i, j) = (idx / g, idx % g);
        let parent_perm = order[idx].unwrap();
        let parent = raw[idx].as_ref().unwrap();
        let parent_up = &parent[parent_perm[0]].anchor_state;
        let neighbors = [
            ((i + 1) % g, j),
            ((i + g - 1) % g, j),
            (i, (j + 1) % g),
            (i, (j + g - 1) % g),
        ];
        for (ni, nj) in neighbors {
            let nidx = ni * g + nj;
            if order[nidx].is_some() {
                continue;
            }
            let Some(pair) = raw[nidx].as_ref() else {
                continue;
            };
            let keep = pair[0].anchor_state.overlap(parent_up).norm();
            let swap = pair[1].anchor_state.overlap(parent_up).norm();
            order[nidx] = Some(if keep >= swap { [0, 1] } else { [1, 0] });
            queue.push_back(nidx);
        }
    }

    let mut states = [
        SampledField::<SpinState>::empty(g, meta(Some(BranchLabel::Up))),
        SampledField::<SpinState>::empty(g, meta(Some(BranchLabel::Down))),
    ];
    let mut chi = [
        SampledField::<f64>::empty(g, meta(Some(BranchLabel::Up))),
        SampledField::<f64>::empty(g, meta(Some(BranchLabel::Down))),
    ];
    for idx in 0..g * g {
        let (i, j) = (idx / g, idx % g);
        if let (Some(pair), Some(perm)) = (raw[idx].as_ref(), order[idx]) {
            for b in 0..2 {
                states[b].set(i, j, Some(pair[perm[b]].anchor_state));
                chi[b].set(i, j, Some(pair[perm[b]].chi));
            }
        }
    }
    Ok(CyclicFields { states, chi })
}

/// The superposed fundamental quasienergy state of the cyclic CAT map for one
/// branch label.
pub fn cyclic_field_superposition(
    params: &KickParams,
    g: usize,
    label: BranchLabel,
) -> Result<SampledField<SpinState>> {
    let fields = cyclic_fields(params, g)?;
    Ok(fields.states[label.index()].clone())
}

// ---------------------------------------------------------------------------
// Local expansion (directional derivatives at a fixed/cyclic point)
// ---------------------------------------------------------------------------

const RESONANCE_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-5;

/// First-order expansion data of the quasienergy states around a fixed or
/// p-cyclic point: directional derivative coefficients
/// `<Z_j | grad_{e_a} | Z_i>` per Jacobian eigendirection `e_a`.
#[derive(Debug, Clone)]
pub struct LocalExpansion {
    /// Branches at the anchor, `[Up, Down]`.
    pub branches: [QuasienergyBranch; 2],
    /// Jacobian eigendirections of `phi^p` at the anchor.
    pub directions: [[C64; 2]; 2],
    /// One-step local Lyapunov exponents (principal log of the p-step
    /// Jacobian eigenvalue, divided by p).
    pub exponents: [C64; 2],
    /// `coeffs[a][i][j] = <Z_j | grad_{e_a} | Z_i>` in the anchor basis.
    pub coeffs: [[[C64; 2]; 2]; 2],
    pub p: usize,
}

/// Directional-derivative coefficients of the quasienergy states at a
/// fixed/cyclic point:
/// `<Z_j|grad_a|Z_i> = <Z_j|grad_a V_p|Z_i> / (e^{-ip(chi_i + i lambda_a)} - e^{-ip chi_j})`.
pub fn local_expansion_matrix(
    params: &KickParams,
    spec: MapSpec,
    theta_star: &TorusPoint,
    p: usize,
) -> Result<LocalExpansion> {
    let branches = fundamental_branches(params, spec, theta_star, p)?;
    let je = eigen_real2(cycle_jacobian(spec, theta_star, p), theta_star)?;

    // Coordinate partials of V_p by central differences.
    let mut partials = [Mat2::zero(), Mat2::zero()];
    for (mu, partial) in partials.iter_mut().enumerate() {
        let mut dp = [0.0, 0.0];
        dp[mu] = FD_STEP;
        let mut dm = [0.0, 0.0];
        dm[mu] = -FD_STEP;
        let vp = evolution_product(params, spec, &theta_star.offset(dp), p)?;
        let vm = evolution_product(params, spec, &theta_star.offset(dm), p)?;
        *partial = vp.mat().sub(vm.mat()).scale(C64::new(0.5 / FD_STEP, 0.0));
    }

    let mu_eig = [
        branches[0].monodromy_eigenvalue(),
        branches[1].monodromy_eigenvalue(),
    ];
    let mut coeffs = [[[C64::new(0.0, 0.0); 2]; 2]; 2];
    let mut exponents = [C64::new(0.0, 0.0); 2];
    let mut directions = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        let e_a = je.eigenvectors[a];
        directions[a] = e_a;
        exponents[a] = je.log_eigenvalues[a] / p as f64;
        let grad_v = partials[0].scale(e_a[0]).add(&partials[1].scale(e_a[1]));
        for i in 0..2 {
            for j in 0..2 {
                // e^{-ip(chi_i + i lambda_a)} = mu_i * Lambda_a with Lambda_a
                // the p-step Jacobian eigenvalue.
                let denom = mu_eig[i] * je.eigenvalues[a] - mu_eig[j];
                if denom.norm() < RESONANCE_TOL {
                    return Err(SkError::ResonantDenominator { denom: denom.norm() });
                }
                let num = inner(
                    branches[j].anchor_state.as_array(),
                    grad_v.matvec(branches[i].anchor_state.as_array()),
                );
                coeffs[a][i][j] = num / denom;
            }
        }
    }
    Ok(LocalExpansion {
        branches,
        directions,
        exponents,
        coeffs,
        p,
    })
}

impl LocalExpansion {
    /// Components of a displacement in the eigendirection basis.
    pub fn eigencoordinates(&self, delta: [f64; 2]) -> [C64; 2] {
        let e = Mat2::new(
            self.directions[0][0],
            self.directions[1][0],
            self.directions[0][1],
            self.directions[1][1],
        );
        let inv = e
            .inverse()
            .expect("jacobian eigendirections are linearly independent");
        let d = inv.matvec([C64::new(delta[0], 0.0), C64::new(delta[1], 0.0)]);
        [d[0], d[1]]
    }

    /// First-order state `|Z_i, theta* + delta>` (unnormalized).
    pub fn first_order_state(&self, label: BranchLabel, delta: [f64; 2]) -> [C64; 2] {
        let i = label.index();
        let coords = self.eigencoordinates(delta);
        let mut state = self.branches[i].anchor_state.as_array();
        for a in 0..2 {
            for j in 0..2 {
                let term = vec_scale(
                    self.branches[j].anchor_state.as_array(),
                    self.coeffs[a][i][j] * coords[a],
                );
                state = vec_add(state, term);
            }
        }
        state
    }
}

// ---------------------------------------------------------------------------
// Perturbative expansion (Koopman-harmonic decomposition of U)
// ---------------------------------------------------------------------------

/// First-order perturbative quasienergy state at `theta`, built from the
/// harmonic components of `U` along the orbit of `theta`:
/// `f_l U_l = (1/N) sum_n e^{-l n} U(phi^n theta)`.
#[derive(Debug, Clone)]
pub struct PerturbativeState {
    /// Unnormalized first-order state.
    pub state: SpinState,
    /// Size of the largest perturbation matrix element, for assessing the
    /// validity of the first-order truncation.
    pub epsilon_hat: f64,
}

pub fn perturbative_state(
    params: &KickParams,
    spec: MapSpec,
    theta_star: &TorusPoint,
    label: BranchLabel,
    theta: &TorusPoint,
    harmonics: &[C64],
    n: usize,
) -> Result<PerturbativeState> {
    assert!(
        harmonics.iter().all(|l| l.norm() > 0.0),
        "harmonics must exclude the zero Koopman exponent"
    );
    let branches = fundamental_branches(params, spec, theta_star, 1)?;
    // Fail early on dimension mismatches so the averaging closure can unwrap.
    kick_unitary(params, theta)?;
    let i = label.index();
    let mu = [
        branches[0].monodromy_eigenvalue(),
        branches[1].monodromy_eigenvalue(),
    ];
    let mut state = branches[i].anchor_state.as_array();
    let mut eps_hat: f64 = 0.0;
    for &lambda in harmonics {
        let w = crate::koopman::orbit_harmonic_average::<Mat2>(
            spec,
            |point| *kick_unitary(params, point).expect("dimension checked above").mat(),
            theta,
            lambda,
            n,
        );
        let phase = lambda.exp();
        for j in 0..2 {
            let element = inner(
                branches[j].anchor_state.as_array(),
                w.matvec(branches[i].anchor_state.as_array()),
            );
            eps_hat = eps_hat.max(element.norm());
            let other = inner(
                branches[i].anchor_state.as_array(),
                w.matvec(branches[j].anchor_state.as_array()),
            );
            eps_hat = eps_hat.max(other.norm());
            let denom = mu[i] * phase - mu[j];
            if denom.norm() < RESONANCE_TOL {
                return Err(SkError::ResonantDenominator { denom: denom.norm() });
            }
            state = vec_add(
                state,
                vec_scale(branches[j].anchor_state.as_array(), element / denom),
            );
        }
    }
    Ok(PerturbativeState {
        state: SpinState::from_array(state),
        epsilon_hat: eps_hat,
    })
}

// ---------------------------------------------------------------------------
// Phase decomposition (dynamical vs geometric / Bargmann part)
// ---------------------------------------------------------------------------

/// Running dynamical and geometric phase sums along an orbit.
#[derive(Debug, Clone, Copy)]
pub struct PhaseLedger {
    /// `sum_k ln <a_k | U(theta_k) | a_k>` (principal logs).
    pub dynamical_sum: C64,
    /// `sum_k ln <a_k | a_{k+1}>` (principal logs).
    pub geometric_sum: C64,
    pub n: usize,
}

impl PhaseLedger {
    /// `(i/n) sum ln <a|U|a>`
    pub fn dynamical_partial(&self) -> C64 {
        C64::new(0.0, 1.0) * self.dynamical_sum / self.n as f64
    }

    /// `(i/n) sum ln <a_k|a_{k+1}>`
    pub fn geometric_partial(&self) -> C64 {
        C64::new(0.0, 1.0) * self.geometric_sum / self.n as f64
    }

    /// Converges to the quasienergy `chi` for an ergodic flow.
    pub fn difference(&self) -> C64 {
        self.dynamical_partial() - self.geometric_partial()
    }
}

const LOG_GUARD: f64 = 1e-3;

/// Accumulate the phase ledger from precomputed states along the orbit
/// (`states.len() == orbit.len() == n + 1`). States are normalized before the
/// inner products; every per-step log must stay clear of the principal-branch
/// cut.
pub fn phase_ledger_from_states(
    params: &KickParams,
    orbit: &[TorusPoint],
    states: &[SpinState],
) -> Result<PhaseLedger> {
    assert!(orbit.len() >= 2, "need at least one step");
    assert_eq!(orbit.len(), states.len());
    let n = orbit.len() - 1;
    let normalized: Vec<SpinState> = states.iter().map(|s| s.normalized()).collect();
    let mut dyn_sum = C64::new(0.0, 0.0);
    let mut geo_sum = C64::new(0.0, 0.0);
    for k in 0..n {
        let u = kick_unitary(params, &orbit[k])?;
        let ua = evolve_state(&u, &normalized[k]);
        let dyn_term = normalized[k].overlap(&ua);
        let geo_term = normalized[k].overlap(&normalized[k + 1]);
        for term in [dyn_term, geo_term] {
            if term.norm() < 1e-12 {
                return Err(SkError::LogBranchJump {
                    step: k,
                    arg: std::f64::consts::PI,
                });
            }
            if term.arg().abs() > std::f64::consts::PI - LOG_GUARD {
                return Err(SkError::LogBranchJump {
                    step: k,
                    arg: term.arg(),
                });
            }
        }
        dyn_sum += dyn_term.ln();
        geo_sum += geo_term.ln();
    }
    Ok(PhaseLedger {
        dynamical_sum: dyn_sum,
        geometric_sum: geo_sum,
        n,
    })
}

/// Phase decomposition along the orbit of `theta0`, with states supplied by
/// the branch continuation (`n_v` terms in each ergodic average). Starting
/// exactly on a fixed-point anchor uses the anchor eigenvector itself.
pub fn phase_decomposition(
    branch: &QuasienergyBranch,
    params: &KickParams,
    spec: MapSpec,
    theta0: &TorusPoint,
    n: usize,
    n_v: usize,
) -> Result<PhaseLedger> {
    let orbit = map_orbit(spec, theta0, n);
    let states: Vec<SpinState> =
        if branch.cycle_length == 1 && theta0.dist(&branch.anchor_point) < 1e-12 {
            vec![branch.anchor_state; n + 1]
        } else {
            let anchor = ContinuationAnchor::new(branch, params, spec, None, n_v)?;
            let computed: Result<Vec<SpinState>> = orbit
                .par_iter()
                .map(|theta| anchor.state_at(theta).map(|cs| cs.state))
                .collect();
            computed?
        };
    phase_ledger_from_states(params, &orbit, &states)
}

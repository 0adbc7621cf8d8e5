//! Direct solver for the linearized NSF system in physical variables,
//!
//! `A0 ∂t V + A1 ∂1 V + A2 ∂2 V = ε² (Σ K_ij ∂i ∂j V + Σ I_j ∂j V) + F`,
//!
//! with `v = θ = 0` on `x1 = 0` and on the far end, where a sponge absorbs
//! outgoing waves. Space: summation-by-parts `∂1`, narrow flux-form second
//! derivatives in both directions, and the wide `∂1∂2` product. Time: explicit
//! SSP-RK3 under a joint advective and diffusive step bound.

use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};

use crate::acoustic::sponge_profile;
use crate::composer::ApproximateSolution;
use crate::error::{Error, Result};
use crate::field::{sbp_d1_xi, StateField};
use crate::grid::Grid;
use crate::model::{BackgroundState, ViscosityScaling};

/// Time factor of one forcing term.
pub type TimeFactor = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Separable physical forcing `F(x, t) = Σ f_m(x) g_m(t)` sampled on the grid.
#[derive(Clone)]
pub struct Forcing {
    pub terms: Vec<(StateField, TimeFactor)>,
}

impl Forcing {
    pub fn at(&self, grid: &Grid, t: f64) -> StateField {
        let mut out = StateField::zeros(grid);
        for (f, g) in &self.terms {
            out.axpy(g(t), f);
        }
        out
    }
}

#[derive(Clone)]
pub struct NsfProblem {
    pub bg: BackgroundState,
    pub scaling: ViscosityScaling,
    /// Initial physical perturbation; `v` and `θ` must vanish on both ends.
    pub init: StateField,
    pub forcing: Option<Forcing>,
}

impl NsfProblem {
    pub fn new(bg: BackgroundState, scaling: ViscosityScaling, init: StateField) -> Self {
        Self {
            bg,
            scaling,
            init,
            forcing: None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.scaling.epsilon
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceOptions {
    /// Target of `dt (λ_adv / √3 + λ_diff / 2.51)`.
    pub cfl: f64,
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
    /// Fixed step; rejected when it exceeds the stability bound.
    pub dt: Option<f64>,
    /// Require at least eight cells inside `x1 < ε`.
    pub check_layer_resolution: bool,
    pub record_energy: bool,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            cfl: 0.8,
            sponge_fraction: 0.1,
            sponge_strength: 4.0,
            dt: None,
            check_layer_resolution: true,
            record_energy: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: usize,
    /// Snapshot times, `t_end · k / intervals` for `k = 0..=intervals`.
    pub times: Vec<f64>,
    pub snapshots: Vec<StateField>,
    /// `Σ w ⟨A0 V, V⟩` after every step when recorded.
    pub energy: Vec<f64>,
    /// Largest `|v|, |θ|` on the wall over all steps.
    pub wall_residual: f64,
}

impl ReferenceSolution {
    pub fn snapshot_near(&self, t: f64) -> Option<&StateField> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|k| &self.snapshots[k])
    }
}

#[derive(Clone, Copy, Debug)]
struct NodeCoeffs {
    a0_inv: Vector4<f64>,
    a0: Vector4<f64>,
    a1: Matrix4<f64>,
    a2: Matrix4<f64>,
    k11: Matrix4<f64>,
    k12: Matrix4<f64>,
    k22: Matrix4<f64>,
    i1: Matrix4<f64>,
    i2: Matrix4<f64>,
}

impl NodeCoeffs {
    fn at(bg: &BackgroundState, s: &ViscosityScaling, x1: f64, x2: f64, t: f64) -> Result<Self> {
        let j = bg.jets(x1, x2, t)?;
        let a0 = j.a0().value().diagonal();
        let [k11, k12, k22] = j.viscous_blocks(s).map(|m| m.value());
        let [i1, i2] = j.coupling(s).map(|m| m.value());
        Ok(Self {
            a0_inv: a0.map(|x| 1.0 / x),
            a0,
            a1: j.a1().value(),
            a2: j.a2().value(),
            k11,
            k12,
            k22,
            i1,
            i2,
        })
    }

    fn scaled(&self, m: &Matrix4<f64>) -> Matrix4<f64> {
        let r = self.a0_inv.map(f64::sqrt);
        Matrix4::from_fn(|a, b| r[a] * m[(a, b)] * r[b])
    }
}

struct CoeffField {
    n2: usize,
    nodes: Vec<NodeCoeffs>,
    uniform: bool,
}

impl CoeffField {
    fn sample(bg: &BackgroundState, s: &ViscosityScaling, grid: &Grid, t: f64) -> Result<Self> {
        if bg.is_constant() {
            return Ok(Self {
                n2: grid.n2(),
                nodes: vec![NodeCoeffs::at(bg, s, 0.0, 0.0, t)?],
                uniform: true,
            });
        }
        let mut nodes = Vec::with_capacity(grid.len());
        for &x1 in grid.x1() {
            for &x2 in grid.x2() {
                nodes.push(NodeCoeffs::at(bg, s, x1, x2, t)?);
            }
        }
        Ok(Self {
            n2: grid.n2(),
            nodes,
            uniform: false,
        })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> &NodeCoeffs {
        if self.uniform {
            &self.nodes[0]
        } else {
            &self.nodes[i * self.n2 + j]
        }
    }
}

fn spectral_radius_sym(m: &Matrix4<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.amax()
}

/// Largest step allowed by the joint advective and diffusive bound.
fn stable_dt(c: &CoeffField, grid: &Grid, eps2: f64, cfl: f64) -> f64 {
    let h1 = grid.dx1_min();
    let h2 = grid.dx2();
    let mut adv: f64 = 0.0;
    let mut diff: f64 = 0.0;
    for n in &c.nodes {
        let ca1 = spectral_radius_sym(&n.scaled(&n.a1));
        let ca2 = spectral_radius_sym(&n.scaled(&n.a2));
        let ci = eps2 * (n.scaled(&n.i1).norm() / h1 + n.scaled(&n.i2).norm() / h2);
        adv = adv.max(ca1 / h1 + ca2 / h2 + ci);
        let k11 = spectral_radius_sym(&n.scaled(&n.k11));
        let k12 = spectral_radius_sym(&n.scaled(&n.k12));
        let k22 = spectral_radius_sym(&n.scaled(&n.k22));
        diff = diff.max(eps2 * (4.0 * k11 / (h1 * h1) + 2.0 * k12 / (h1 * h2) + 4.0 * k22 / (h2 * h2)));
    }
    cfl / (adv / 3f64.sqrt() + diff / 2.51).max(1e-300)
}

/// `Σ w1 Δx2 ⟨A0 V, V⟩`.
fn energy(c: &CoeffField, v: &StateField, grid: &Grid) -> f64 {
    let w1 = grid.weight1();
    let mut s = 0.0;
    for i in 0..grid.n1() {
        let mut row = 0.0;
        for j in 0..grid.n2() {
            let a0 = &c.at(i, j).a0;
            let u = v.at(i, j);
            row += (0..4).map(|k| a0[k] * u[k] * u[k]).sum::<f64>();
        }
        s += w1[i] * row;
    }
    s * grid.dx2()
}

struct Workspace {
    d1: StateField,
    /// Inverse half-cell spacings and node weights of the narrow `∂11`.
    inv_h: Vec<f64>,
    w1: Vec<f64>,
}

impl Workspace {
    fn new(grid: &Grid) -> Self {
        let x = grid.x1();
        Self {
            d1: StateField::zeros(grid),
            inv_h: x.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect(),
            w1: grid.weight1().to_vec(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn nsf_rhs(
    grid: &Grid,
    c: &CoeffField,
    eps2: f64,
    sponge: &[f64],
    v: &StateField,
    forcing: Option<&StateField>,
    ws: &mut Workspace,
    out: &mut StateField,
) {
    let n1 = grid.n1();
    let n2 = grid.n2();
    let n = n1 - 1;
    let dxi = grid.dxi();
    let jac = grid.jac();
    let h2 = grid.dx2();
    for i in 0..n1 {
        for j in 0..n2 {
            let mut g = [0.0; 4];
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = sbp_d1_xi(|m| v.at(m, j)[k], i, n, dxi) / jac[i];
            }
            *ws.d1.at_mut(i, j) = g;
        }
    }
    let vec = |a: &[f64; 4]| Vector4::new(a[0], a[1], a[2], a[3]);
    for i in 0..n1 {
        let interior = i > 0 && i < n;
        for j in 0..n2 {
            let (jp, jm) = ((j + 1) % n2, (j + n2 - 1) % n2);
            let u = vec(v.at(i, j));
            let up = vec(v.at(i, jp));
            let um = vec(v.at(i, jm));
            let d1 = vec(ws.d1.at(i, j));
            let d2 = (up - um) / (2.0 * h2);
            let d22 = (up - 2.0 * u + um) / (h2 * h2);
            let d12 = (vec(ws.d1.at(i, jp)) - vec(ws.d1.at(i, jm))) / (2.0 * h2);
            let d11 = if interior {
                let fp = (vec(v.at(i + 1, j)) - u) * ws.inv_h[i];
                let fm = (u - vec(v.at(i - 1, j))) * ws.inv_h[i - 1];
                (fp - fm) / ws.w1[i]
            } else {
                Vector4::zeros()
            };
            let cf = c.at(i, j);
            let mut r = -(cf.a1 * d1) - cf.a2 * d2
                + (cf.k11 * d11 + cf.k12 * d12 * 2.0 + cf.k22 * d22 + cf.i1 * d1 + cf.i2 * d2) * eps2;
            if let Some(f) = forcing {
                r += vec(f.at(i, j));
            }
            let mut du = r.component_mul(&cf.a0_inv) - u * sponge[i];
            if !interior {
                du[1] = 0.0;
                du[2] = 0.0;
                du[3] = 0.0;
            }
            *out.at_mut(i, j) = [du[0], du[1], du[2], du[3]];
        }
    }
}

fn wall_gap(v: &StateField, i: usize) -> f64 {
    (0..v.n2())
        .map(|j| {
            let p = v.at(i, j);
            p[1].abs().max(p[2].abs()).max(p[3].abs())
        })
        .fold(0.0, f64::max)
}

/// Marches to `t_end`, keeping `intervals + 1` evenly spaced snapshots.
pub fn solve_nsf(
    problem: &NsfProblem,
    grid: &Grid,
    t_end: f64,
    intervals: usize,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    problem.scaling.validate()?;
    let eps = problem.epsilon();
    if opts.check_layer_resolution {
        grid.check_layer_resolution(eps)?;
    }
    if !problem.init.matches(grid) {
        return Err(Error::GridMismatch(format!(
            "initial field is {} x {}, grid is {} x {}",
            problem.init.n1(),
            problem.init.n2(),
            grid.n1(),
            grid.n2()
        )));
    }
    if !(t_end > 0.0) || intervals == 0 {
        return Err(Error::InvalidInput(format!(
            "need t_end > 0 and at least one interval, got {t_end} and {intervals}"
        )));
    }
    let n = grid.n1() - 1;
    let gap = wall_gap(&problem.init, 0).max(wall_gap(&problem.init, n));
    if gap > 1e-10 {
        return Err(Error::BoundaryInconsistency(gap));
    }
    let eps2 = eps * eps;
    let bg = &problem.bg;
    let s = &problem.scaling;
    let mut coeffs = CoeffField::sample(bg, s, grid, 0.0)?;
    let mut limit = stable_dt(&coeffs, grid, eps2, opts.cfl);
    if bg.time_dependent {
        for t in [0.5 * t_end, t_end] {
            limit = limit.min(stable_dt(&CoeffField::sample(bg, s, grid, t)?, grid, eps2, opts.cfl));
        }
    }
    let interval = t_end / intervals as f64;
    let per = match opts.dt {
        Some(dt) => {
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt, limit });
            }
            (interval / dt - 1e-9).ceil().max(1.0) as usize
        }
        None => (interval / limit).ceil().max(1.0) as usize,
    };
    let steps = per * intervals;
    let dt = t_end / steps as f64;

    let speed = coeffs
        .nodes
        .iter()
        .map(|c| spectral_radius_sym(&c.scaled(&c.a1)))
        .fold(0.0, f64::max);
    let width = opts.sponge_fraction * grid.spec().x1_max;
    let peak = if width > 0.0 {
        opts.sponge_strength * speed / width
    } else {
        0.0
    };
    let sponge = sponge_profile(grid, opts.sponge_fraction, peak);

    let mut sol = ReferenceSolution {
        epsilon: eps,
        dt,
        steps,
        times: vec![0.0],
        snapshots: vec![problem.init.clone()],
        energy: Vec::new(),
        wall_residual: 0.0,
    };
    if opts.record_energy {
        sol.energy.push(energy(&coeffs, &problem.init, grid));
    }
    if let Some(f) = &problem.forcing {
        if f.terms.iter().any(|(x, _)| !x.matches(grid)) {
            return Err(Error::GridMismatch("forcing is not sampled on the grid".into()));
        }
    }
    let forcing_at = |t: f64| problem.forcing.as_ref().map(|f| f.at(grid, t));
    let mut ws = Workspace::new(grid);
    let mut u = problem.init.clone();
    let mut rhs = StateField::zeros(grid);
    let mut stage = StateField::zeros(grid);
    let time_dependent = bg.time_dependent;
    for k in 0..steps {
        let t = k as f64 * dt;
        // (weight on u^n, weight on the stage, stage time)
        let plan = [(0.0, 1.0, t), (0.75, 0.25, t + dt), (1.0 / 3.0, 2.0 / 3.0, t + 0.5 * dt)];
        for (si, &(a, b, ts)) in plan.iter().enumerate() {
            if time_dependent {
                coeffs = CoeffField::sample(bg, s, grid, ts)?;
            }
            let f = forcing_at(ts);
            let input = if si == 0 { &u } else { &stage };
            nsf_rhs(grid, &coeffs, eps2, &sponge, input, f.as_ref(), &mut ws, &mut rhs);
            let mut next = input.clone();
            next.axpy(dt, &rhs);
            if a != 0.0 {
                next.lincomb(b, a, &u);
            }
            stage = next;
        }
        std::mem::swap(&mut u, &mut stage);
        sol.wall_residual = sol.wall_residual.max(wall_gap(&u, 0));
        if !u.max_abs_all().is_finite() {
            return Err(Error::SolverDiverged {
                residual: f64::INFINITY,
                iterations: k + 1,
            });
        }
        if opts.record_energy {
            if time_dependent {
                coeffs = CoeffField::sample(bg, s, grid, (k + 1) as f64 * dt)?;
            }
            sol.energy.push(energy(&coeffs, &u, grid));
        }
        if (k + 1) % per == 0 {
            sol.times.push((k + 1) as f64 * dt);
            sol.snapshots.push(u.clone());
        }
    }
    log::debug!("reference eps = {eps}: {steps} steps of {dt:.3e}");
    Ok(sol)
}

/// `w^ε = V^ε − V_approx` on a shared grid.
pub fn error_field(reference: &StateField, approx: &ApproximateSolution) -> Result<StateField> {
    if reference.n1() != approx.v.n1() || reference.n2() != approx.v.n2() {
        return Err(Error::GridMismatch(format!(
            "reference is {} x {}, approximation is {} x {}",
            reference.n1(),
            reference.n2(),
            approx.v.n1(),
            approx.v.n2()
        )));
    }
    let a = approx.v.data();
    Ok(reference.map(|i, j, r| {
        let q = &a[i * reference.n2() + j];
        [r[0] - q[0], r[1] - q[1], r[2] - q[2], r[3] - q[3]]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::reference_manufactured_errors;
    use crate::grid::GridSpec;
    use crate::model::EquationOfState;
    use std::f64::consts::PI;

    fn no_check() -> ReferenceOptions {
        ReferenceOptions {
            check_layer_resolution: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = GridSpec::uniform(1.0, 1.0, 16, 8).build().unwrap();
        let p = NsfProblem::new(
            BackgroundState::ideal_at_rest(),
            ViscosityScaling::default(),
            StateField::zeros(&grid),
        );
        let sol = solve_nsf(&p, &grid, 0.2, 2, &no_check()).unwrap();
        assert_eq!(sol.snapshots.len(), 3);
        assert!(sol.snapshots.iter().all(|s| s.max_abs_all() == 0.0));
    }

    #[test]
    fn coarse_grid_is_rejected_for_the_layer() {
        let grid = GridSpec::uniform(1.0, 1.0, 16, 8).build().unwrap();
        let p = NsfProblem::new(
            BackgroundState::ideal_at_rest(),
            ViscosityScaling::default(),
            StateField::zeros(&grid),
        );
        let err = solve_nsf(&p, &grid, 0.2, 1, &ReferenceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarseForLayer { .. }));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = GridSpec::uniform(1.0, 1.0, 16, 8).build().unwrap();
        let p = NsfProblem::new(
            BackgroundState::ideal_at_rest(),
            ViscosityScaling::default(),
            StateField::zeros(&grid),
        );
        let opts = ReferenceOptions {
            dt: Some(0.5),
            ..no_check()
        };
        let err = solve_nsf(&p, &grid, 1.0, 1, &opts).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn nonzero_wall_velocity_is_rejected() {
        let grid = GridSpec::uniform(1.0, 1.0, 16, 8).build().unwrap();
        let init = StateField::from_fn(&grid, |_, _| [0.0, 1.0, 0.0, 0.0]);
        let p = NsfProblem::new(BackgroundState::ideal_at_rest(), ViscosityScaling::default(), init);
        let err = solve_nsf(&p, &grid, 0.1, 1, &no_check()).unwrap_err();
        assert!(matches!(err, Error::BoundaryInconsistency(_)));
    }

    fn pulse(grid: &Grid) -> StateField {
        StateField::from_fn(grid, |x1, x2| {
            let r = (x1 - 0.5) / 0.3;
            let b = if r.abs() < 1.0 { (1.0 - r * r).powi(4) } else { 0.0 };
            [b * (1.0 + 0.5 * (2.0 * PI * x2).cos()), 0.0, 0.0, 0.5 * b]
        })
    }

    #[test]
    fn energy_does_not_grow_and_wall_stays_clean() {
        let grid = GridSpec::tanh(2.0, 1.0, 96, 16, 2.0).build().unwrap();
        let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.6, EquationOfState::ideal()).unwrap();
        let s = ViscosityScaling::new(1.0, 0.5, 1.0, 0.1).unwrap();
        let p = NsfProblem::new(bg, s, pulse(&grid));
        let opts = ReferenceOptions {
            record_energy: true,
            ..no_check()
        };
        let sol = solve_nsf(&p, &grid, 0.8, 4, &opts).unwrap();
        let e = &sol.energy;
        assert_eq!(e.len(), sol.steps + 1);
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * e[0], "{} -> {}", w[0], w[1]);
        }
        assert!(e[e.len() - 1] < e[0]);
        assert_eq!(sol.wall_residual, 0.0);
        for snap in &sol.snapshots {
            assert_eq!(wall_gap(snap, 0), 0.0);
        }
    }

    #[test]
    fn viscosity_damps_the_pulse() {
        let grid = GridSpec::uniform(2.0, 1.0, 80, 16).build().unwrap();
        let run = |eps: f64| {
            let s = ViscosityScaling::new(1.0, 0.0, 1.0, eps).unwrap();
            let p = NsfProblem::new(BackgroundState::ideal_at_rest(), s, pulse(&grid));
            let o = ReferenceOptions {
                record_energy: true,
                sponge_fraction: 0.0,
                ..no_check()
            };
            let sol = solve_nsf(&p, &grid, 0.3, 1, &o).unwrap();
            *sol.energy.last().unwrap() / sol.energy[0]
        };
        assert!(run(0.5) < run(0.05));
    }

    fn observed_order(errors: &[f64]) -> f64 {
        errors
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.8, EquationOfState::ideal()).unwrap();
        let s = ViscosityScaling::new(1.0, 0.3, 1.2, 0.1).unwrap();
        let specs = [16, 32, 64].map(|n| GridSpec::uniform(1.0, 1.0, n, n));
        let e = reference_manufactured_errors(&bg, s, &specs).unwrap();
        assert!(observed_order(&e) >= 1.8, "{e:?}");
    }

    #[test]
    fn manufactured_solution_on_graded_grid_with_moving_background() {
        let bg = BackgroundState::analytic(
            "shear",
            EquationOfState::ideal(),
            false,
            false,
            Arc::new(|x1, x2, _| {
                let y = *x2 * (2.0 * PI);
                [
                    1.0 + y.sin() * 0.1,
                    *x1 * (1.0 - *x1) * 0.2,
                    y.cos() * 0.1,
                    1.0 + *x1 * 0.2,
                ]
            }),
        )
        .unwrap();
        let s = ViscosityScaling::new(1.0, 0.3, 1.2, 0.1).unwrap();
        let specs = [16, 32, 64].map(|n| GridSpec::tanh(1.0, 1.0, n, n, 1.5));
        let e = reference_manufactured_errors(&bg, s, &specs).unwrap();
        assert!(observed_order(&e) >= 1.8, "{e:?}");
    }

    #[test]
    fn error_field_subtracts_the_approximation() {
        let grid = GridSpec::uniform(1.0, 1.0, 4, 4).build().unwrap();
        let r = StateField::from_fn(&grid, |x1, x2| [x1, x2, 1.0, 2.0]);
        let v = StateField::from_fn(&grid, |x1, _| [x1, 0.0, 1.0, 0.0]);
        let a = ApproximateSolution {
            epsilon: 0.1,
            t: 0.0,
            w: v.clone(),
            v: v.clone(),
            k: v,
        };
        let e = error_field(&r, &a).unwrap();
        let g = grid.x2();
        for i in 0..grid.n1() {
            for j in 0..grid.n2() {
                assert_eq!(*e.at(i, j), [0.0, g[j], 0.0, 2.0]);
            }
        }
        let small = StateField::zeros(&GridSpec::uniform(1.0, 1.0, 8, 4).build().unwrap());
        assert!(error_field(&small, &a).is_err());
    }
}

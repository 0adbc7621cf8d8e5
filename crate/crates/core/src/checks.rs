//! Verification batteries shared by the unit tests, `verify` and the
//! acceptance suite. Each returns the measured quantities; callers decide.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustic::{
    solve_euler, AcousticOptions, AcousticProblem, BoundaryData, CoefficientField, ScalarFn, Source, SourceFn,
};
use crate::characteristic::{eigen_frame, mat_vec};
use crate::error::Result;
use crate::field::StateField;
use crate::grid::{Grid, GridSpec, LayerGrid, TimeGrid};
use crate::harness::{linf_interpolation_check, LinfCheck};
use crate::jet::Jet;
use crate::layers::{solve_layer_ode, BoundaryOperatorCoeffs, LayerOptions};
use crate::model::{a1m_matrix, BackgroundState, EquationOfState, ViscosityScaling};
use crate::prandtl::{solve_prandtl, z_weights, LayerProfile, PrandtlCoefficients, PrandtlOptions, PrandtlPoint};
use crate::reference::{solve_nsf, Forcing, NsfProblem, ReferenceOptions};

/// `log2(e_k / e_{k+1})` for successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameAudit {
    /// `max ‖Q Qᵀ − I‖_max`.
    pub orthogonality: f64,
    /// `max ‖Q A1m Qᵀ − diag(0, 0, s, −s)‖_max`.
    pub diagonalization: f64,
}

pub fn frame_audit(alphas: &[f64]) -> FrameAudit {
    let mut a = FrameAudit::default();
    for &alpha in alphas {
        let f = eigen_frame(alpha);
        let s = (alpha * alpha + 1.0).sqrt();
        let d = f.q * a1m_matrix(alpha) * f.q.transpose();
        let expect = Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, s, -s));
        a.orthogonality = a.orthogonality.max((f.q * f.q.transpose() - Matrix4::identity()).abs().max());
        a.diagonalization = a.diagonalization.max((d - expect).abs().max());
    }
    a
}

/// `n` seeded draws of `α ∈ [−3, 3]`.
pub fn random_alphas(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-3.0..=3.0)).collect()
}

/// Eigenvalues of the wall frame for an isentropic gas (`p_θ = 0`).
pub fn isentropic_eigenvalues() -> Result<[f64; 4]> {
    let bg = BackgroundState::constant(1.0, 0.0, 0.0, 1.0, EquationOfState::isentropic(1.0, 1.4))?;
    Ok(eigen_frame(bg.alpha(0.0, 0.0)?).eigenvalues)
}

/// A constant ideal gas at rest with wall parameter `α = ρ/θ` (`θ = 1`);
/// `α = 0` gives the isentropic gas.
pub fn background_with_alpha(alpha: f64) -> Result<BackgroundState> {
    if alpha == 0.0 {
        BackgroundState::constant(1.0, 0.0, 0.0, 1.0, EquationOfState::isentropic(1.0, 1.4))
    } else {
        BackgroundState::constant(alpha, 0.0, 0.0, 1.0, EquationOfState::ideal())
    }
}

fn uniform_series(count: usize, dt: f64, g: impl Fn(f64) -> [f64; 2]) -> Vec<Vec<[f64; 2]>> {
    (0..count).map(|n| vec![g(n as f64 * dt)]).collect()
}

/// `L²(z)` error at `t = 1` of the heat-type Prandtl system against
/// `u* = t z e^{−z}` in both components, on `(nz, steps)` grids.
pub fn prandtl_manufactured_errors(runs: &[(usize, usize)], flip_tau: bool) -> Result<Vec<f64>> {
    runs.iter()
        .map(|&(nz, steps)| {
            let t_end = 1.0;
            let dt = t_end / steps as f64;
            let grid = LayerGrid::new(20.0, nz)?;
            let mut c = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0));
            if flip_tau {
                c = c.with_flipped_tau();
            }
            let mut f = LayerProfile::zeros(grid, 1, dt, steps + 1);
            for n in 0..=steps {
                let t = n as f64 * dt;
                for k in 0..grid.nodes() {
                    let z = grid.z(k);
                    let v = z * (-z).exp() - t * (z - 2.0) * (-z).exp();
                    let e = f.levels[n].at_mut(k, 0);
                    e[0] = v;
                    e[1] = v;
                }
            }
            let wall = uniform_series(steps + 1, dt, |_| [0.0, 0.0]);
            let opts = PrandtlOptions {
                waive_compatibility: true,
                ..Default::default()
            };
            let u = solve_prandtl(&c, Some(&f), &wall, &grid, 1, dt, &opts)?;
            let w = z_weights(&grid);
            let s: f64 = (0..grid.nodes())
                .map(|k| {
                    let z = grid.z(k);
                    let exact = t_end * z * (-z).exp();
                    let p = u.at(steps, k, 0);
                    w[k] * ((p[0] - exact).powi(2) + (p[1] - exact).powi(2))
                })
                .sum();
            Ok(s.sqrt())
        })
        .collect()
}

fn decoupled_run(nz: usize, steps: usize) -> Result<LayerProfile> {
    let t_end = 0.5;
    let dt = t_end / steps as f64;
    let grid = LayerGrid::new(12.0, nz)?;
    let c = PrandtlCoefficients::uniform(PrandtlPoint {
        a: [1.0, 1.0],
        d: [1.0, 0.5],
        b: Matrix2::zeros(),
        c: Matrix2::zeros(),
    });
    let wall = uniform_series(steps + 1, dt, |t| {
        [(3.0 * t).sin().powi(2), -0.5 * (1.0 - (4.0 * t).cos())]
    });
    solve_prandtl(&c, None, &wall, &grid, 1, dt, &PrandtlOptions::default())
}

/// `(L∞ gap to a 10× finer oracle, tail of the coarse run)` for the decoupled
/// constant-coefficient Prandtl system with wall data.
pub fn prandtl_oracle_gap() -> Result<(f64, f64)> {
    let coarse = decoupled_run(480, 200)?;
    let fine = decoupled_run(4800, 2000)?;
    let mut worst: f64 = 0.0;
    for n in 0..=200 {
        for k in 0..=480 {
            let (a, b) = (coarse.at(n, k, 0), fine.at(10 * n, 10 * k, 0));
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    Ok((worst, coarse.tail_max(&[0, 1])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerOdeAudit {
    pub alpha: f64,
    /// `max |B2 + (e^{−z} − e^{−Z})/s|` on the finest grid.
    pub closed_form_error: f64,
    /// `|B3 + B2|`, zero when the two components mirror.
    pub mirror_gap: f64,
    /// `max |s ∂z B2 − H2|` (centered differences) per refinement.
    pub residuals: Vec<f64>,
}

/// Layer ODE with `H2 = H3 = e^{−z}` on `Z = 30` at `nz ∈ {750, 1500, 3000}`.
pub fn layer_ode_audit(bg: &BackgroundState) -> Result<LayerOdeAudit> {
    let x2 = [0.0];
    let c = BoundaryOperatorCoeffs::sample(bg, &ViscosityScaling::default(), &x2, &[0.0])?;
    let alpha = c.at(0, 0).alpha;
    let s = (alpha * alpha + 1.0).sqrt();
    let z_max = 30.0;
    let mut out = LayerOdeAudit {
        alpha,
        closed_form_error: 0.0,
        mirror_gap: 0.0,
        residuals: Vec::new(),
    };
    for nz in [750, 1500, 3000] {
        let grid = LayerGrid::new(z_max, nz)?;
        let mut h = LayerProfile::zeros(grid, 1, 0.1, 1);
        for k in 0..grid.nodes() {
            let e = (-grid.z(k)).exp();
            *h.levels[0].at_mut(k, 0) = [0.0, 0.0, e, e];
        }
        let b = solve_layer_ode(&h, &c, &LayerOptions { tail_tol: 1e-10 })?;
        let dz = grid.dz();
        let mut res: f64 = 0.0;
        for k in 1..grid.nz {
            let d = (b.at(0, k + 1, 0)[2] - b.at(0, k - 1, 0)[2]) / (2.0 * dz);
            res = res.max((s * d - h.at(0, k, 0)[2]).abs());
        }
        out.residuals.push(res);
        out.closed_form_error = 0.0;
        out.mirror_gap = 0.0;
        for k in 0..grid.nodes() {
            let z = grid.z(k);
            let exact = -((-z).exp() - (-z_max).exp()) / s;
            let p = b.at(0, k, 0);
            out.closed_form_error = out.closed_form_error.max((p[2] - exact).abs());
            out.mirror_gap = out.mirror_gap.max((p[3] + p[2]).abs());
        }
    }
    Ok(out)
}

/// `E*` with analytic derivatives `(∂t, ∂1, ∂2)`.
fn acoustic_exact(x1: f64, x2: f64, t: f64) -> ([f64; 4], [[f64; 4]; 3]) {
    let k = 2.0 * PI;
    let (s2, c2) = ((k * x2).sin(), (k * x2).cos());
    let a = (x1 + t).sin();
    let da = (x1 + t).cos();
    let b = (-x1 * x1).exp() * (2.0 * t).cos();
    let db1 = -2.0 * x1 * (-x1 * x1).exp() * (2.0 * t).cos();
    let dbt = -2.0 * (-x1 * x1).exp() * (2.0 * t).sin();
    let v = [a * c2, b * s2, a + b * c2, a - b * s2];
    let dt = [da * c2, dbt * s2, da + dbt * c2, da - dbt * s2];
    let d1 = [da * c2, db1 * s2, da + db1 * c2, da - db1 * s2];
    let d2 = [-k * a * s2, k * b * c2, -k * b * s2, -k * b * c2];
    (v, [dt, d1, d2])
}

/// `L²` errors at `t = 0.25` of the acoustic solver against a manufactured
/// solution with wall data and source, on `n × n` grids.
pub fn acoustic_manufactured_errors(sizes: &[usize], graded: bool) -> Result<Vec<f64>> {
    sizes
        .iter()
        .map(|&n| {
            let spec = if graded {
                GridSpec::tanh(1.0, 1.0, n, n, 1.5)
            } else {
                GridSpec::uniform(1.0, 1.0, n, n)
            };
            let grid = spec.build()?;
            let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.5, EquationOfState::ideal())?;
            let s = ViscosityScaling::default();
            let coeffs = CoefficientField::sample(&bg, &s, &grid, 0.0)?;
            let c = *coeffs.at(0, 0);
            let exact = move |x1: f64, x2: f64, t: f64| acoustic_exact(x1, x2, t).0;
            let gap = move |x1: f64| -> ScalarFn {
                Arc::new(move |x2, t| {
                    let v = exact(x1, x2, t);
                    v[2] - v[3]
                })
            };
            let src: SourceFn = Arc::new(move |g: &Grid, t: f64| {
                StateField::from_fn(g, |x1, x2| {
                    let (v, [dt, d1, d2]) = acoustic_exact(x1, x2, t);
                    let p = mat_vec(&c.a0, &dt);
                    let q = mat_vec(&c.a1, &d1);
                    let r = mat_vec(&c.a2, &d2);
                    let w = mat_vec(&c.w, &v);
                    [0, 1, 2, 3].map(|k| p[k] + q[k] + r[k] + w[k])
                })
            });
            let p = AcousticProblem {
                bg,
                scaling: s,
                init: StateField::from_fn(&grid, |x1, x2| exact(x1, x2, 0.0)),
                wall: BoundaryData::Function(gap(0.0)),
                far: BoundaryData::Function(gap(1.0)),
                source: Source::Field(src),
            };
            let t_end = 0.25;
            let time = TimeGrid::fitted(t_end, 0.5 * grid.dx1_min() / coeffs.max_speed(), 1)?;
            let opts = AcousticOptions {
                sponge_fraction: 0.0,
                snapshot_steps: vec![time.steps()],
                ..Default::default()
            };
            let sol = solve_euler(&p, &grid, &time, &opts)?;
            let end = sol.snapshots.last().expect("final snapshot");
            let err = end.map(|i, j, u| {
                let e = exact(grid.x1()[i], grid.x2()[j], t_end);
                [0, 1, 2, 3].map(|k| u[k] - e[k])
            });
            Ok(err.norm_sq(&grid).sqrt())
        })
        .collect()
}

/// Largest one-step growth of a recorded energy, relative to its start.
pub fn max_energy_growth(e: &[f64]) -> f64 {
    let e0 = e.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    e.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::NEG_INFINITY, f64::max)
}

/// Acoustic energy trace for a pulse on a constant background with `g = 0`.
pub fn acoustic_energy_trace() -> Result<Vec<f64>> {
    let grid = GridSpec::tanh(2.0, 1.0, 64, 16, 2.0).build()?;
    let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.6, EquationOfState::ideal())?;
    let frame = eigen_frame(bg.alpha(0.0, 0.0)?);
    let init = StateField::from_fn(&grid, |x1, x2| {
        let b = (-((x1 - 0.4) / 0.15).powi(2)).exp() * (1.0 + 0.5 * (2.0 * PI * x2).cos());
        frame.to_characteristic(&[b, 0.0, 0.0, 0.0])
    });
    let p = AcousticProblem::homogeneous(bg, ViscosityScaling::default(), init);
    let time = TimeGrid::fitted(0.6, 0.5 * grid.dx1_min(), 1)?;
    let opts = AcousticOptions {
        record_energy: true,
        ..Default::default()
    };
    Ok(solve_euler(&p, &grid, &time, &opts)?.energy)
}

/// Spatial factors of `V*_k = φ_k(x) g_k(t)`; `v, θ` vanish on `x1 = 0, 1`.
fn nsf_phi(x1: f64, x2: f64) -> [Jet; 4] {
    let x = Jet::var(x1, 0);
    let y = Jet::var(x2, 1);
    let s = (x * PI).sin();
    let w = (y * (2.0 * PI)).cos();
    [
        (x * 1.3 + y * (2.0 * PI)).cos(),
        s * w,
        s * (x * 2.0).cos() * (y * (2.0 * PI)).sin(),
        (x * (2.0 * PI)).sin() * (1.0 + w * 0.5),
    ]
}

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `(g_k, g_k')`.
fn nsf_time_factors() -> [(TimeFn, TimeFn); 4] {
    [
        (Arc::new(|t: f64| (0.7 * t).cos()), Arc::new(|t: f64| -0.7 * (0.7 * t).sin())),
        (Arc::new(|t: f64| t + 1.0), Arc::new(|_| 1.0)),
        (Arc::new(|t: f64| (0.7 * t).cos()), Arc::new(|t: f64| -0.7 * (0.7 * t).sin())),
        (Arc::new(|t: f64| (-0.5 * t).exp()), Arc::new(|t: f64| -0.5 * (-0.5 * t).exp())),
    ]
}

fn nsf_exact(grid: &Grid, t: f64) -> StateField {
    let g = nsf_time_factors();
    StateField::from_fn(grid, |x1, x2| {
        let p = nsf_phi(x1, x2);
        [0, 1, 2, 3].map(|k| p[k].value() * g[k].0(t))
    })
}

/// `F = A0 ∂t V* + A1 ∂1 V* + A2 ∂2 V* − ε²(Σ K ∂∂ V* + Σ I ∂ V*)`, one pair of
/// terms per component of `V*`. The background must not depend on `t`.
fn nsf_forcing(bg: &BackgroundState, s: ViscosityScaling, grid: &Grid) -> Result<Forcing> {
    let e2 = s.epsilon * s.epsilon;
    let mut mass: Vec<StateField> = (0..4).map(|_| StateField::zeros(grid)).collect();
    let mut flux: Vec<StateField> = (0..4).map(|_| StateField::zeros(grid)).collect();
    for (i, &x1) in grid.x1().iter().enumerate() {
        for (j, &x2) in grid.x2().iter().enumerate() {
            let jt = bg.jets(x1, x2, 0.0)?;
            let a0 = jt.a0().value();
            let a1 = jt.a1().value();
            let a2 = jt.a2().value();
            let [k11, k12, k22] = jt.viscous_blocks(&s).map(|m| m.value());
            let [i1, i2] = jt.coupling(&s).map(|m| m.value());
            let p = nsf_phi(x1, x2);
            for k in 0..4 {
                let e = |v: f64| {
                    let mut u = Vector4::zeros();
                    u[k] = v;
                    u
                };
                let q = &p[k];
                let m = a0 * e(q.value());
                let f = a1 * e(q.d(0)) + a2 * e(q.d(1))
                    - (k11 * e(q.deriv(2, 0, 0))
                        + k12 * e(q.deriv(1, 1, 0)) * 2.0
                        + k22 * e(q.deriv(0, 2, 0))
                        + i1 * e(q.d(0))
                        + i2 * e(q.d(1)))
                        * e2;
                *mass[k].at_mut(i, j) = [m[0], m[1], m[2], m[3]];
                *flux[k].at_mut(i, j) = [f[0], f[1], f[2], f[3]];
            }
        }
    }
    let mut terms = Vec::new();
    for (k, (g, dg)) in nsf_time_factors().into_iter().enumerate() {
        terms.push((mass[k].clone(), dg));
        terms.push((flux[k].clone(), g));
    }
    Ok(Forcing { terms })
}

/// `L²` errors at `t = 0.25` of the direct NSF solver against a manufactured
/// solution with forcing, one per grid spec.
pub fn reference_manufactured_errors(
    bg: &BackgroundState,
    scaling: ViscosityScaling,
    specs: &[GridSpec],
) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|spec| {
            let grid = spec.build()?;
            let t_end = 0.25;
            let mut p = NsfProblem::new(bg.clone(), scaling, nsf_exact(&grid, 0.0));
            p.forcing = Some(nsf_forcing(bg, scaling, &grid)?);
            let opts = ReferenceOptions {
                sponge_fraction: 0.0,
                check_layer_resolution: false,
                ..Default::default()
            };
            let sol = solve_nsf(&p, &grid, t_end, 1, &opts)?;
            let mut diff = sol.snapshots.last().expect("final snapshot").clone();
            diff.axpy(-1.0, &nsf_exact(&grid, t_end));
            Ok(diff.norm_sq(&grid).sqrt())
        })
        .collect()
}

fn compact_bump(x: f64, centre: f64, half: f64) -> f64 {
    let r = (x - centre) / half;
    if r.abs() < 1.0 {
        (1.0 - r * r).powi(4)
    } else {
        0.0
    }
}

/// Energy trace and wall residual of the direct solver for a pulse on a
/// constant background at `ε = 0.1`.
pub fn reference_energy_trace() -> Result<(Vec<f64>, f64)> {
    let grid = GridSpec::tanh(2.0, 1.0, 96, 16, 2.0).build()?;
    let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.6, EquationOfState::ideal())?;
    let s = ViscosityScaling::new(1.0, 0.5, 1.0, 0.1)?;
    let init = StateField::from_fn(&grid, |x1, x2| {
        let b = compact_bump(x1, 0.5, 0.3);
        [b * (1.0 + 0.5 * (2.0 * PI * x2).cos()), 0.0, 0.0, 0.5 * b]
    });
    let opts = ReferenceOptions {
        record_energy: true,
        check_layer_resolution: false,
        ..Default::default()
    };
    let sol = solve_nsf(&NsfProblem::new(bg, s, init), &grid, 0.8, 4, &opts)?;
    Ok((sol.energy, sol.wall_residual))
}

/// A smooth field decaying in `x1` and localized in `x2` around the middle of
/// the period: a cubic B-spline bump plus a constant, times `e^{−λ x1}`, times
/// a random Fourier sum under a Gaussian envelope.
pub fn random_decaying_field(grid: &Grid, rng: &mut impl Rng) -> Vec<f64> {
    let l = grid.spec().x2_len;
    let modes: Vec<(f64, f64, f64)> = (0..4)
        .map(|k| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), (k + 1) as f64))
        .collect();
    let decay = rng.random_range(1.0..4.0);
    let knot = rng.random_range(0.5..2.0);
    let width = rng.random_range(0.5..1.5);
    let c0 = rng.random_range(-1.0..1.0);
    let mut f = Vec::with_capacity(grid.len());
    for &x1 in grid.x1() {
        let r = ((x1 - knot) / width).abs();
        let spline = if r < 1.0 {
            (2.0 - r).powi(3) - 4.0 * (1.0 - r).powi(3)
        } else if r < 2.0 {
            (2.0 - r).powi(3)
        } else {
            0.0
        };
        let radial = (spline + c0) * (-decay * x1).exp();
        for &x2 in grid.x2() {
            let y = x2 - 0.5 * l;
            let mut s = 0.5;
            for &(a, b, k) in &modes {
                let w = 2.0 * PI * k * y / 4.0;
                s += a * w.cos() + b * w.sin();
            }
            f.push(radial * s * (-y * y).exp());
        }
    }
    f
}

/// The interpolation inequality on `count` seeded random fields over
/// `[0, 8] × [0, 10)` with 400 × 400 cells.
pub fn interpolation_battery(count: usize, seed: u64) -> Result<Vec<LinfCheck>> {
    let grid = GridSpec::uniform(8.0, 10.0, 400, 400).build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| linf_interpolation_check(&random_decaying_field(&grid, &mut rng), &grid))
        .collect()
}

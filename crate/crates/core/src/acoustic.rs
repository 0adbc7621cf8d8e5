//! Linearized Euler solver in characteristic variables.
//!
//! `𝒜0 ∂t E + 𝒜1 ∂1 E + 𝒜2 ∂2 E + 𝒲 E = F` on the mapped grid, with a
//! summation-by-parts first derivative in `x1`, periodic central differences
//! in `x2` and SSP-RK3 in time. The single wall condition `E2 − E3 = g` is
//! imposed after every stage by shifting `E2` and `E3` symmetrically, which
//! fixes `v1 = g/√2` and leaves the other physical components untouched.
//! The far end carries the same condition and a sponge.

use std::sync::Arc;

use nalgebra::{Matrix4, SymmetricEigen};

use crate::characteristic::{mat_vec, point_coefficients, TransformedCoefficients};
use crate::error::{Error, Result};
use crate::field::{sbp_d1_xi, Derivatives, StateField};
use crate::grid::{Grid, TimeGrid};
use crate::model::{BackgroundState, ViscosityScaling};

/// Coefficients needed by the acoustic step and by `Λ` at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCoeffs {
    pub a0: Matrix4<f64>,
    pub a0_inv: Matrix4<f64>,
    pub a1: Matrix4<f64>,
    pub a2: Matrix4<f64>,
    pub w: Matrix4<f64>,
    /// `𝒬¹ + 𝒬²`.
    pub lam0: Matrix4<f64>,
    /// `𝒫1 + ℐ1`.
    pub lam1: Matrix4<f64>,
    /// `𝒫2 + ℐ2`.
    pub lam2: Matrix4<f64>,
    pub k11: Matrix4<f64>,
    pub k12: Matrix4<f64>,
    pub k22: Matrix4<f64>,
}

impl PointCoeffs {
    pub fn from_transformed(tc: &TransformedCoefficients) -> Result<Self> {
        let a0_inv = tc.cal_a0.try_inverse().ok_or(Error::NonPositiveCoefficient {
            name: "A0",
            value: tc.cal_a0.determinant(),
        })?;
        Ok(Self {
            a0: tc.cal_a0,
            a0_inv,
            a1: tc.cal_a1(),
            a2: tc.cal_a2,
            w: tc.cal_w,
            lam0: tc.cal_q1 + tc.cal_q2,
            lam1: tc.cal_p1 + tc.cal_i1,
            lam2: tc.cal_p2 + tc.cal_i2,
            k11: tc.k11(),
            k12: tc.k12(),
            k22: tc.k22(),
        })
    }

    /// Largest characteristic speed in each direction.
    pub fn speeds(&self) -> [f64; 2] {
        let s = SymmetricEigen::new(self.a0).eigenvalues;
        let half = Matrix4::from_diagonal(&s.map(|v| 1.0 / v.sqrt()));
        let v = SymmetricEigen::new(self.a0).eigenvectors;
        let root_inv = v * half * v.transpose();
        let rho = |a: &Matrix4<f64>| {
            let m = root_inv * a * root_inv;
            let m = (m + m.transpose()) * 0.5;
            SymmetricEigen::new(m).eigenvalues.abs().max()
        };
        [rho(&self.a1), rho(&self.a2)]
    }
}

/// Transformed coefficients sampled on every node at one time.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    n2: usize,
    uniform: Option<PointCoeffs>,
    data: Vec<PointCoeffs>,
    /// `α` on the wall, per `x2` node.
    pub alpha: Vec<f64>,
    pub time: f64,
}

impl CoefficientField {
    pub fn sample(
        bg: &BackgroundState,
        scaling: &ViscosityScaling,
        grid: &Grid,
        t: f64,
    ) -> Result<Self> {
        scaling.validate()?;
        let alpha = grid
            .x2()
            .iter()
            .map(|&x2| bg.alpha(x2, t))
            .collect::<Result<Vec<_>>>()?;
        if bg.is_constant() {
            let tc = point_coefficients(bg, scaling, 0.0, 0.0, t)?;
            return Ok(Self {
                n2: grid.n2(),
                uniform: Some(PointCoeffs::from_transformed(&tc)?),
                data: Vec::new(),
                alpha,
                time: t,
            });
        }
        let mut data = Vec::with_capacity(grid.len());
        for &x1 in grid.x1() {
            for &x2 in grid.x2() {
                let tc = point_coefficients(bg, scaling, x1, x2, t)?;
                data.push(PointCoeffs::from_transformed(&tc)?);
            }
        }
        Ok(Self {
            n2: grid.n2(),
            uniform: None,
            data,
            alpha,
            time: t,
        })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &PointCoeffs {
        match &self.uniform {
            Some(c) => c,
            None => &self.data[i * self.n2 + j],
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform.is_some()
    }

    /// Largest characteristic speed over all nodes.
    pub fn max_speed(&self) -> f64 {
        let it: Box<dyn Iterator<Item = &PointCoeffs>> = match &self.uniform {
            Some(c) => Box::new(std::iter::once(c)),
            None => Box::new(self.data.iter()),
        };
        it.map(|c| {
            let [a, b] = c.speeds();
            a.max(b)
        })
        .fold(0.0, f64::max)
    }
}

/// `ΛE = (𝒬¹+𝒬²)E + Σ(𝒫j+ℐj)∂jE + K11∂11E + 2K12∂12E + K22∂22E`.
pub fn apply_lambda(coeffs: &CoefficientField, e: &StateField, grid: &Grid) -> StateField {
    let d = Derivatives::new(grid);
    let e1 = d.d1(e);
    let e12 = d.d2(&e1);
    let mut out = StateField::zeros(grid);
    for i in 0..grid.n1() {
        for j in 0..grid.n2() {
            let c = coeffs.at(i, j);
            let u = e.at(i, j);
            let g1 = e1.at(i, j);
            let g2 = d.d2_at(e, i, j);
            let h11 = d.d11_at(e, i, j);
            let h22 = d.d22_at(e, i, j);
            let h12 = e12.at(i, j);
            let terms = [
                mat_vec(&c.lam0, u),
                mat_vec(&c.lam1, g1),
                mat_vec(&c.lam2, &g2),
                mat_vec(&c.k11, &h11),
                mat_vec(&(c.k12 * 2.0), h12),
                mat_vec(&c.k22, &h22),
            ];
            let o = out.at_mut(i, j);
            for t in terms {
                for k in 0..4 {
                    o[k] += t[k];
                }
            }
        }
    }
    out
}

/// Samples of a scalar wall datum `g(x2, t)` at equally spaced levels.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSeries {
    pub dt: f64,
    /// `values[n][j]` at `t = n dt`, `x2 = x2_j`.
    pub values: Vec<Vec<f64>>,
}

impl LevelSeries {
    /// Cubic Lagrange interpolation in time, with the stencil shifted inward at the ends.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        let last = self.values.len() - 1;
        if last == 0 {
            return self.values[0][j];
        }
        let s = (t / self.dt).clamp(0.0, last as f64);
        if last < 3 {
            let n = (s.floor() as usize).min(last - 1);
            let w = s - n as f64;
            return (1.0 - w) * self.values[n][j] + w * self.values[n + 1][j];
        }
        let n = s.floor() as usize;
        let start = n.saturating_sub(1).min(last - 3);
        let mut acc = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (s - (start + b) as f64) / (a as f64 - b as f64);
                }
            }
            acc += l * self.values[start + a][j];
        }
        acc
    }
}

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SourceFn = Arc<dyn Fn(&Grid, f64) -> StateField + Send + Sync>;

/// Data `g` in the condition `E2 − E3 = g` at one end of the `x1` interval.
#[derive(Clone)]
pub enum BoundaryData {
    Zero,
    Function(ScalarFn),
    Levels(LevelSeries),
}

impl BoundaryData {
    pub fn eval(&self, x2: &[f64], t: f64) -> Vec<f64> {
        match self {
            BoundaryData::Zero => vec![0.0; x2.len()],
            BoundaryData::Function(f) => x2.iter().map(|&x| f(x, t)).collect(),
            BoundaryData::Levels(s) => (0..x2.len()).map(|j| s.eval(j, t)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BoundaryData::Zero)
    }
}

/// Right-hand side `F`.
#[derive(Clone)]
pub enum Source {
    None,
    Field(SourceFn),
    /// `ΛE` of another acoustic problem, marched alongside with the same coefficients.
    Lambda(Box<AcousticProblem>),
}

#[derive(Clone)]
pub struct AcousticProblem {
    pub bg: BackgroundState,
    pub scaling: ViscosityScaling,
    pub init: StateField,
    pub wall: BoundaryData,
    pub far: BoundaryData,
    pub source: Source,
}

impl AcousticProblem {
    pub fn homogeneous(bg: BackgroundState, scaling: ViscosityScaling, init: StateField) -> Self {
        Self {
            bg,
            scaling,
            init,
            wall: BoundaryData::Zero,
            far: BoundaryData::Zero,
            source: Source::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticOptions {
    pub cfl: f64,
    /// Fraction of `X1max` covered by the sponge.
    pub sponge_fraction: f64,
    /// Peak damping rate in units of `speed / sponge width`.
    pub sponge_strength: f64,
    /// Steps at which full snapshots are kept.
    pub snapshot_steps: Vec<usize>,
    /// Record `⟨𝒜0 U, U⟩` after every step.
    pub record_energy: bool,
}

impl Default for AcousticOptions {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            sponge_fraction: 0.1,
            sponge_strength: 4.0,
            snapshot_steps: Vec::new(),
            record_energy: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AcousticSolution {
    pub dt: f64,
    pub steps: usize,
    pub snapshot_steps: Vec<usize>,
    pub snapshots: Vec<StateField>,
    /// Wall trace after every step, `traces[k][j]`.
    pub traces: Vec<Vec<[f64; 4]>>,
    pub energy: Vec<f64>,
    /// Largest `|E2 − E3 − g|` on either end over all stored steps.
    pub bc_residual: f64,
}

impl AcousticSolution {
    pub fn snapshot_at(&self, step: usize) -> Option<&StateField> {
        self.snapshot_steps
            .iter()
            .position(|&s| s == step)
            .map(|k| &self.snapshots[k])
    }
}

pub fn sponge_profile(grid: &Grid, fraction: f64, peak: f64) -> Vec<f64> {
    let x_max = grid.spec().x1_max;
    let start = (1.0 - fraction) * x_max;
    grid.x1()
        .iter()
        .map(|&x| {
            if fraction > 0.0 && x > start {
                let r = (x - start) / (x_max - start);
                peak * r * r
            } else {
                0.0
            }
        })
        .collect()
}

/// `dt ≤ cfl · min(Δx1, Δx2) / speed`.
pub fn check_cfl(grid: &Grid, dt: f64, speed: f64, cfl: f64) -> Result<()> {
    let limit = cfl * grid.dx1_min().min(grid.dx2()) / speed.max(1e-300);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}

/// `Σ w ⟨𝒜0 U, U⟩` with trapezoid weights in `x1`.
pub fn energy(coeffs: &CoefficientField, u: &StateField, grid: &Grid) -> f64 {
    let w1 = grid.weight1();
    let mut s = 0.0;
    for i in 0..grid.n1() {
        let mut row = 0.0;
        for j in 0..grid.n2() {
            let v = u.at(i, j);
            let av = mat_vec(&coeffs.at(i, j).a0, v);
            row += v[0] * av[0] + v[1] * av[1] + v[2] * av[2] + v[3] * av[3];
        }
        s += w1[i] * row;
    }
    s * grid.dx2()
}

fn project(u: &mut StateField, i: usize, g: &[f64]) {
    for (j, &gj) in g.iter().enumerate() {
        let p = u.at_mut(i, j);
        let c = 0.5 * (gj - (p[2] - p[3]));
        p[2] += c;
        p[3] -= c;
    }
}

fn boundary_gap(u: &StateField, i: usize, g: &[f64]) -> f64 {
    g.iter()
        .enumerate()
        .map(|(j, &gj)| {
            let p = u.at(i, j);
            (p[2] - p[3] - gj).abs()
        })
        .fold(0.0, f64::max)
}

/// Hyperbolic right-hand side `𝒜0⁻¹(F − 𝒜1∂1U − 𝒜2∂2U − 𝒲U) − σU`.
fn euler_rhs(
    grid: &Grid,
    coeffs: &CoefficientField,
    sponge: &[f64],
    u: &StateField,
    f: Option<&StateField>,
    out: &mut StateField,
) {
    let n = grid.n1() - 1;
    let n2 = grid.n2();
    let dxi = grid.dxi();
    let inv2 = 0.5 / grid.dx2();
    let jac = grid.jac();
    let uniform = coeffs.is_uniform();
    let w_zero = uniform && coeffs.at(0, 0).w.iter().all(|&v| v == 0.0);
    for i in 0..=n {
        let inv_j = 1.0 / jac[i];
        for j in 0..n2 {
            let c = coeffs.at(i, j);
            let jp = if j + 1 == n2 { 0 } else { j + 1 };
            let jm = if j == 0 { n2 - 1 } else { j - 1 };
            let (up, um) = (u.at(i, jp), u.at(i, jm));
            let mut d1 = [0.0; 4];
            let mut d2 = [0.0; 4];
            for k in 0..4 {
                d1[k] = sbp_d1_xi(|m| u.at(m, j)[k], i, n, dxi) * inv_j;
                d2[k] = (up[k] - um[k]) * inv2;
            }
            let a = mat_vec(&c.a1, &d1);
            let b = mat_vec(&c.a2, &d2);
            let mut r = [0.0; 4];
            for k in 0..4 {
                r[k] = -a[k] - b[k];
            }
            let uij = u.at(i, j);
            if !w_zero {
                let wu = mat_vec(&c.w, uij);
                for k in 0..4 {
                    r[k] -= wu[k];
                }
            }
            if let Some(f) = f {
                let fv = f.at(i, j);
                for k in 0..4 {
                    r[k] += fv[k];
                }
            }
            let mut o = mat_vec(&c.a0_inv, &r);
            let s = sponge[i];
            if s != 0.0 {
                for k in 0..4 {
                    o[k] -= s * uij[k];
                }
            }
            *out.at_mut(i, j) = o;
        }
    }
}

struct Level<'a> {
    problem: &'a AcousticProblem,
    state: StateField,
}

fn flatten(problem: &AcousticProblem) -> Vec<&AcousticProblem> {
    let mut chain = vec![problem];
    let mut cur = problem;
    while let Source::Lambda(inner) = &cur.source {
        chain.push(inner);
        cur = inner;
    }
    chain
}

/// Coefficients at a stage time; constant in time unless the background is.
struct CoeffCache<'a> {
    bg: &'a BackgroundState,
    scaling: &'a ViscosityScaling,
    grid: &'a Grid,
    current: CoefficientField,
}

impl<'a> CoeffCache<'a> {
    fn get(&mut self, t: f64) -> Result<&CoefficientField> {
        if self.bg.time_dependent && self.current.time != t {
            self.current = CoefficientField::sample(self.bg, self.scaling, self.grid, t)?;
        }
        Ok(&self.current)
    }
}

pub fn solve_euler(
    problem: &AcousticProblem,
    grid: &Grid,
    time: &TimeGrid,
    opts: &AcousticOptions,
) -> Result<AcousticSolution> {
    let chain = flatten(problem);
    for p in &chain {
        if !p.init.matches(grid) {
            return Err(Error::GridMismatch(format!(
                "initial field is {} x {}, grid is {} x {}",
                p.init.n1(),
                p.init.n2(),
                grid.n1(),
                grid.n2()
            )));
        }
    }
    let dt = time.dt();
    let steps = time.steps();
    let mut cache = CoeffCache {
        bg: &problem.bg,
        scaling: &problem.scaling,
        grid,
        current: CoefficientField::sample(&problem.bg, &problem.scaling, grid, 0.0)?,
    };
    let speed = cache.current.max_speed();
    check_cfl(grid, dt, speed, opts.cfl)?;
    let width = opts.sponge_fraction * grid.spec().x1_max;
    let peak = if width > 0.0 {
        opts.sponge_strength * speed / width
    } else {
        0.0
    };
    let sponge = sponge_profile(grid, opts.sponge_fraction, peak);
    let x2 = grid.x2();
    let n = grid.n1() - 1;

    let mut levels: Vec<Level> = Vec::with_capacity(chain.len());
    for p in &chain {
        let g0 = p.wall.eval(x2, 0.0);
        let gap = boundary_gap(&p.init, 0, &g0).max(boundary_gap(&p.init, n, &p.far.eval(x2, 0.0)));
        if gap > 1e-10 {
            return Err(Error::BoundaryInconsistency(gap));
        }
        levels.push(Level {
            problem: p,
            state: p.init.clone(),
        });
    }

    let mut sol = AcousticSolution {
        dt,
        steps,
        snapshot_steps: Vec::new(),
        snapshots: Vec::new(),
        traces: Vec::with_capacity(steps + 1),
        energy: Vec::new(),
        bc_residual: 0.0,
    };
    let record = |sol: &mut AcousticSolution, u: &StateField, k: usize, c: &CoefficientField| {
        sol.traces.push(u.trace());
        if opts.snapshot_steps.contains(&k) {
            sol.snapshot_steps.push(k);
            sol.snapshots.push(u.clone());
        }
        if opts.record_energy {
            sol.energy.push(energy(c, u, grid));
        }
    };
    let c0 = cache.get(0.0)?.clone();
    record(&mut sol, &levels[0].state, 0, &c0);

    let depth = levels.len();
    let mut rhs: Vec<StateField> = (0..depth).map(|_| StateField::zeros(grid)).collect();
    let mut stage: Vec<StateField> = Vec::new();
    let mut lam: Vec<Option<StateField>> = vec![None; depth];

    for k in 0..steps {
        let t = time.step_time(k);
        // (weight on u^n, weight on the stage, time of the stage input, time of the output)
        let plan = [
            (0.0, 1.0, t, t + dt),
            (0.75, 0.25, t + dt, t + 0.5 * dt),
            (1.0 / 3.0, 2.0 / 3.0, t + 0.5 * dt, t + dt),
        ];
        for (s, &(a, b, ts, tout)) in plan.iter().enumerate() {
            let coeffs = cache.get(ts)?;
            let inputs: Vec<&StateField> = if s == 0 {
                levels.iter().map(|l| &l.state).collect()
            } else {
                stage.iter().collect()
            };
            for l in 0..depth {
                lam[l] = None;
                let extern_src = match &levels[l].problem.source {
                    Source::Field(f) => Some(f(grid, ts)),
                    Source::Lambda(_) => Some(apply_lambda(coeffs, inputs[l + 1], grid)),
                    Source::None => None,
                };
                lam[l] = extern_src;
            }
            for l in 0..depth {
                euler_rhs(grid, coeffs, &sponge, inputs[l], lam[l].as_ref(), &mut rhs[l]);
            }
            let mut outs = Vec::with_capacity(depth);
            for l in 0..depth {
                let mut next = inputs[l].clone();
                next.axpy(dt, &rhs[l]);
                if a != 0.0 {
                    next.lincomb(b, a, &levels[l].state);
                }
                let p = levels[l].problem;
                project(&mut next, 0, &p.wall.eval(x2, tout));
                project(&mut next, n, &p.far.eval(x2, tout));
                outs.push(next);
            }
            stage = outs;
        }
        for l in 0..depth {
            levels[l].state = stage[l].clone();
        }
        let tn = time.step_time(k + 1);
        let gap = boundary_gap(&levels[0].state, 0, &problem.wall.eval(x2, tn));
        sol.bc_residual = sol.bc_residual.max(gap);
        let c = cache.get(tn)?.clone();
        record(&mut sol, &levels[0].state, k + 1, &c);
        if !levels[0].state.max_abs_all().is_finite() {
            return Err(Error::SolverDiverged {
                residual: f64::INFINITY,
                iterations: k + 1,
            });
        }
    }
    Ok(sol)
}

//! Linear coupled Prandtl-type system in the stretched variable
//!
//! `a ∂t u − d ∂²z u + b z ∂z u + c u − δ ∂²z2 u = f`, `u = (B0, B1)`,
//!
//! with Dirichlet data at `z = 0`, zero at `z = Z1max` and zero initial data.
//! Crank–Nicolson in time with the coefficients frozen at `n + ½`; each `x2`
//! line is a 2×2 block tridiagonal system. The wall data enter through the
//! lift `L = u(0) e^{−z²}`, so the solved unknown vanishes at both ends.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::characteristic::TransformedJets;
use crate::error::{Error, Result};
use crate::field::StateField;
use crate::grid::LayerGrid;
use crate::model::{BackgroundState, ViscosityScaling};

/// Layer functions on `z ∈ [0, Z1max]` × periodic `x2` × time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerProfile {
    pub grid: LayerGrid,
    pub n2: usize,
    /// Spacing of the time levels.
    pub dt: f64,
    /// One field per level, node `(k, j)` at `z_k`, `x2_j`.
    pub levels: Vec<StateField>,
    /// Largest `l` for which the weighted tail check passed.
    pub decay_order: u32,
}

impl LayerProfile {
    pub fn zeros(grid: LayerGrid, n2: usize, dt: f64, count: usize) -> Self {
        Self {
            grid,
            n2,
            dt,
            levels: (0..count)
                .map(|_| StateField::zeros_dims(grid.nodes(), n2))
                .collect(),
            decay_order: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn at(&self, n: usize, k: usize, j: usize) -> &[f64; 4] {
        self.levels[n].at(k, j)
    }

    /// Largest `|value|` over `z ∈ [0.9 Z1max, Z1max]`, all levels, given components.
    pub fn tail_max(&self, comps: &[usize]) -> f64 {
        let start = (0.9 * self.grid.nz as f64).floor() as usize;
        let mut m: f64 = 0.0;
        for f in &self.levels {
            for k in start..self.grid.nodes() {
                for j in 0..self.n2 {
                    let v = f.at(k, j);
                    for &c in comps {
                        m = m.max(v[c].abs());
                    }
                }
            }
        }
        m
    }

    /// Linear interpolation in `z`; zero beyond `Z1max`.
    pub fn sample_z(&self, n: usize, z: f64, j: usize) -> [f64; 4] {
        if z >= self.grid.z_max || z < 0.0 {
            return [0.0; 4];
        }
        let s = z / self.grid.dz();
        let k = (s.floor() as usize).min(self.grid.nz - 1);
        let w = s - k as f64;
        let (a, b) = (self.at(n, k, j), self.at(n, k + 1, j));
        [0, 1, 2, 3].map(|c| (1.0 - w) * a[c] + w * b[c])
    }

    /// Cubic interpolation in `z` through the four nearest nodes; zero beyond `Z1max`.
    pub fn sample_z_cubic(&self, n: usize, z: f64, j: usize) -> [f64; 4] {
        if z >= self.grid.z_max || z < 0.0 {
            return [0.0; 4];
        }
        let nz = self.grid.nz;
        let s = z / self.grid.dz();
        let k = s.floor() as usize;
        let start = k.saturating_sub(1).min(nz - 3);
        let mut out = [0.0; 4];
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (s - (start + b) as f64) / (a as f64 - b as f64);
                }
            }
            let v = self.at(n, start + a, j);
            for c in 0..4 {
                out[c] += l * v[c];
            }
        }
        out
    }
}

/// Prandtl coefficients at one wall point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrandtlPoint {
    pub a: [f64; 2],
    pub d: [f64; 2],
    /// Coefficient of `z ∂z`.
    pub b: Matrix2<f64>,
    /// Zeroth-order coupling.
    pub c: Matrix2<f64>,
}

impl PrandtlPoint {
    pub fn heat(a: f64, d: f64) -> Self {
        Self {
            a: [a, a],
            d: [d, d],
            b: Matrix2::zeros(),
            c: Matrix2::zeros(),
        }
    }

    fn lerp(&self, o: &Self, w: f64) -> Self {
        let m = |x: f64, y: f64| (1.0 - w) * x + w * y;
        Self {
            a: [m(self.a[0], o.a[0]), m(self.a[1], o.a[1])],
            d: [m(self.d[0], o.d[0]), m(self.d[1], o.d[1])],
            b: self.b * (1.0 - w) + o.b * w,
            c: self.c * (1.0 - w) + o.c * w,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a1", self.a[0]),
            ("a2", self.a[1]),
            ("d1", self.d[0]),
            ("d2", self.d[1]),
        ] {
            if !(v > 0.0) {
                return Err(Error::NonPositiveCoefficient { name, value: v });
            }
        }
        Ok(())
    }
}

/// `a = diag(𝒜0₀₀, 𝒜0₁₁)`, `d = diag(K11₀₀, K11₁₁) = (μ̄/p'_ρ, τ0)`,
/// `b = [∂1 𝒜1r]_I`, `c = [𝒲]_I`, all on the wall.
pub fn assemble_prandtl_coeffs(tj: &TransformedJets) -> PrandtlPoint {
    let a0 = tj.cal_a0.value();
    let k = tj.cal_k11.value();
    let b = tj.cal_a1.deriv(1, 0, 0);
    let w = tj.cal_w.value();
    PrandtlPoint {
        a: [a0[(0, 0)], a0[(1, 1)]],
        d: [k[(0, 0)], k[(1, 1)]],
        b: Matrix2::new(b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]),
        c: Matrix2::new(w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]),
    }
}

/// Coefficients on every `(level, x2)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PrandtlCoefficients {
    /// `points[n][j]`; a single level and a single column mean "constant".
    pub points: Vec<Vec<PrandtlPoint>>,
    pub delta: f64,
    /// `x2` spacing used by the `δ` sweep.
    pub x2_spacing: f64,
}

impl PrandtlCoefficients {
    pub fn uniform(p: PrandtlPoint) -> Self {
        Self {
            points: vec![vec![p]],
            delta: 0.0,
            x2_spacing: 1.0,
        }
    }

    /// Samples the wall coefficients of a background at the level times.
    pub fn sample(
        bg: &BackgroundState,
        scaling: &ViscosityScaling,
        x2: &[f64],
        level_times: &[f64],
    ) -> Result<Self> {
        let times: &[f64] = if bg.time_dependent { level_times } else { &level_times[..1] };
        let cols: &[f64] = if bg.is_constant() { &x2[..1] } else { x2 };
        let mut points = Vec::with_capacity(times.len());
        for &t in times {
            let mut row = Vec::with_capacity(cols.len());
            for &y in cols {
                check_wall_velocity(bg, y, t)?;
                let tj = TransformedJets::at(bg, scaling, 0.0, y, t)?;
                let p = assemble_prandtl_coeffs(&tj);
                p.validate()?;
                row.push(p);
            }
            points.push(row);
        }
        let x2_spacing = if x2.len() > 1 { x2[1] - x2[0] } else { 1.0 };
        Ok(Self {
            points,
            delta: 0.0,
            x2_spacing,
        })
    }

    pub fn with_delta(mut self, delta: f64, x2_spacing: f64) -> Self {
        self.delta = delta;
        self.x2_spacing = x2_spacing;
        self
    }

    /// Negates `d2` everywhere; a negative control for the verification suite.
    pub fn with_flipped_tau(mut self) -> Self {
        for row in &mut self.points {
            for p in row {
                p.d[1] = -p.d[1];
            }
        }
        self
    }

    pub fn at(&self, n: usize, j: usize) -> &PrandtlPoint {
        let row = &self.points[n.min(self.points.len() - 1)];
        &row[j.min(row.len() - 1)]
    }

    /// Coefficients frozen at `t_{n+½}`.
    fn half(&self, n: usize, j: usize) -> PrandtlPoint {
        self.at(n, j).lerp(self.at(n + 1, j), 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "delta",
                value: self.delta,
            });
        }
        for row in &self.points {
            for p in row {
                p.validate()?;
            }
        }
        Ok(())
    }
}

/// The layer construction needs `u'_1 = u'_2 = 0` on the wall.
pub fn check_wall_velocity(bg: &BackgroundState, x2: f64, t: f64) -> Result<()> {
    let [_, u1, u2, _] = bg.primitive_jets(0.0, x2, t);
    let (a, b) = (u1.value(), u2.value());
    if a.abs() > 1e-12 || b.abs() > 1e-12 {
        return Err(Error::UnsupportedBackground(format!(
            "wall velocity ({a}, {b}) at x2 = {x2}, t = {t} must vanish"
        )));
    }
    Ok(())
}

/// Lift of raw wall data `g` (the layer takes the value `−g` on the wall):
/// `L(z) = −g e^{−z²}` at one level.
pub fn lift_boundary_data(raw: &[[f64; 2]], grid: &LayerGrid) -> StateField {
    let mut out = StateField::zeros_dims(grid.nodes(), raw.len());
    for k in 0..grid.nodes() {
        let e = (-grid.z(k).powi(2)).exp();
        for (j, g) in raw.iter().enumerate() {
            let v = out.at_mut(k, j);
            v[0] = -g[0] * e;
            v[1] = -g[1] * e;
        }
    }
    out
}

/// `ℰ(L) = a ∂t L − d ∂²z L + b z ∂z L + c L` for the lift of constant-in-time
/// raw data, evaluated in closed form. Used to state the shifted problem.
pub fn lift_residual(raw: [f64; 2], p: &PrandtlPoint, z: f64) -> [f64; 2] {
    let e = (-z * z).exp();
    let l = [-raw[0] * e, -raw[1] * e];
    let lz = [2.0 * z * raw[0] * e, 2.0 * z * raw[1] * e];
    let lzz = [
        -raw[0] * (4.0 * z * z - 2.0) * e,
        -raw[1] * (4.0 * z * z - 2.0) * e,
    ];
    let mut out = [0.0; 2];
    for r in 0..2 {
        out[r] = -p.d[r] * lzz[r];
        for s in 0..2 {
            out[r] += p.b[(r, s)] * z * lz[s] + p.c[(r, s)] * l[s];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrandtlOptions {
    /// Skip the zero-data-at-`t = 0` requirement.
    pub waive_compatibility: bool,
    pub compat_tol: f64,
}

impl Default for PrandtlOptions {
    fn default() -> Self {
        Self {
            waive_compatibility: false,
            compat_tol: 1e-12,
        }
    }
}

/// Applies `L u = −d u_zz + b z u_z + c u` at interior node `k` of one line.
#[inline]
fn apply_op(p: &PrandtlPoint, u: &[Vector2<f64>], k: usize, z: f64, dz: f64) -> Vector2<f64> {
    let uzz = (u[k + 1] - u[k] * 2.0 + u[k - 1]) / (dz * dz);
    let uz = (u[k + 1] - u[k - 1]) / (2.0 * dz);
    let d = Vector2::new(p.d[0] * uzz[0], p.d[1] * uzz[1]);
    -d + p.b * uz * z + p.c * u[k]
}

/// Solves `A_k x_{k-1} + B_k x_k + C_k x_{k+1} = r_k`, `k = 0..m`, with `x_{-1} = x_m = 0`.
fn block_thomas(
    lower: &[Matrix2<f64>],
    diag: &[Matrix2<f64>],
    upper: &[Matrix2<f64>],
    rhs: &[Vector2<f64>],
    row_offset: usize,
) -> Result<Vec<Vector2<f64>>> {
    let m = diag.len();
    let mut cp = vec![Matrix2::zeros(); m];
    let mut dp = vec![Vector2::zeros(); m];
    for k in 0..m {
        let denom = if k == 0 { diag[0] } else { diag[k] - lower[k] * cp[k - 1] };
        let det = denom.determinant();
        let inv = denom.try_inverse().filter(|_| det.abs() > 1e-300).ok_or(
            Error::SingularBlockSystem {
                row: k + row_offset,
                det,
            },
        )?;
        cp[k] = inv * upper[k];
        dp[k] = if k == 0 { inv * rhs[0] } else { inv * (rhs[k] - lower[k] * dp[k - 1]) };
    }
    let mut x = vec![Vector2::zeros(); m];
    x[m - 1] = dp[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = dp[k] - cp[k] * x[k + 1];
    }
    Ok(x)
}

/// Periodic tridiagonal solve `lo_j x_{j−1} + di_j x_j + up_j x_{j+1} = y_j`
/// by Sherman–Morrison on the corner entries.
fn cyclic_tridiagonal(lo: &[f64], di: &[f64], up: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let gamma = -di[0];
    let mut b = di.to_vec();
    b[0] = di[0] - gamma;
    b[n - 1] = di[n - 1] - lo[0] * up[n - 1] / gamma;
    let solve = |rhs: &[f64]| {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = up[0] / b[0];
        dp[0] = rhs[0] / b[0];
        for k in 1..n {
            let m = b[k] - lo[k] * cp[k - 1];
            cp[k] = up[k] / m;
            dp[k] = (rhs[k] - lo[k] * dp[k - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for k in (0..n - 1).rev() {
            x[k] = dp[k] - cp[k] * x[k + 1];
        }
        x
    };
    let x = solve(y);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = up[n - 1];
    let q = solve(&u);
    let v0 = 1.0;
    let vn = lo[0] / gamma;
    let fact = (v0 * x[0] + vn * x[n - 1]) / (1.0 + v0 * q[0] + vn * q[n - 1]);
    x.iter().zip(&q).map(|(xi, qi)| xi - fact * qi).collect()
}

/// Solves the system on all levels. `rhs` and `wall` give `f` and the
/// Dirichlet value `u(0)` per level; only components 0 and 1 are read from
/// `rhs` and written to the result.
pub fn solve_prandtl(
    coeffs: &PrandtlCoefficients,
    rhs: Option<&LayerProfile>,
    wall: &[Vec<[f64; 2]>],
    grid: &LayerGrid,
    n2: usize,
    dt: f64,
    opts: &PrandtlOptions,
) -> Result<LayerProfile> {
    coeffs.validate()?;
    let count = wall.len();
    if count == 0 {
        return Err(Error::InvalidInput("no time levels for the Prandtl solve".into()));
    }
    if let Some(f) = rhs {
        if f.count() != count || f.n2 != n2 || f.grid != *grid {
            return Err(Error::GridMismatch("Prandtl right-hand side layout".into()));
        }
    }
    if !opts.waive_compatibility {
        let w0 = wall[0].iter().map(|g| g[0].abs().max(g[1].abs())).fold(0.0, f64::max);
        let f0 = rhs.map_or(0.0, |f| f.levels[0].max_abs(0).max(f.levels[0].max_abs(1)));
        if w0 > opts.compat_tol || f0 > opts.compat_tol {
            return Err(Error::CompatibilityViolation(format!(
                "data at t = 0 must vanish: wall {w0:e}, rhs {f0:e}"
            )));
        }
    }
    let nodes = grid.nodes();
    let dz = grid.dz();
    let z = grid.coords();
    let gauss: Vec<f64> = z.iter().map(|&s| (-s * s).exp()).collect();
    let mut out = LayerProfile::zeros(*grid, n2, dt, count);
    for k in 0..nodes {
        for j in 0..n2 {
            let v = out.levels[0].at_mut(k, j);
            v[0] = wall[0][j][0] * gauss[k];
            v[1] = wall[0][j][1] * gauss[k];
        }
    }
    // lifted unknown u = B − L; L_n(z) = wall_n e^{−z²}
    let lift = |n: usize, j: usize, k: usize| {
        Vector2::new(wall[n][j][0], wall[n][j][1]) * gauss[k]
    };
    let f_at = |n: usize, k: usize, j: usize| match rhs {
        Some(f) => {
            let v = f.at(n, k, j);
            Vector2::new(v[0], v[1])
        }
        None => Vector2::zeros(),
    };
    let m = nodes - 2;
    for n in 0..count - 1 {
        let prev = &out.levels[n];
        let lines: Vec<Result<Vec<Vector2<f64>>>> = (0..n2)
            .into_par_iter()
            .map(|j| {
                let p = coeffs.half(n, j);
                let a = Matrix2::new(p.a[0], 0.0, 0.0, p.a[1]) / dt;
                let u_old: Vec<Vector2<f64>> = (0..nodes)
                    .map(|k| {
                        let v = prev.at(k, j);
                        Vector2::new(v[0], v[1]) - lift(n, j, k)
                    })
                    .collect();
                let l_old: Vec<Vector2<f64>> = (0..nodes).map(|k| lift(n, j, k)).collect();
                let l_new: Vec<Vector2<f64>> = (0..nodes).map(|k| lift(n + 1, j, k)).collect();
                let dmat = Matrix2::new(p.d[0], 0.0, 0.0, p.d[1]) / (dz * dz);
                let mut lower = Vec::with_capacity(m);
                let mut diag = Vec::with_capacity(m);
                let mut upper = Vec::with_capacity(m);
                let mut r = Vec::with_capacity(m);
                for k in 1..nodes - 1 {
                    let adv = p.b * (z[k] / (2.0 * dz));
                    lower.push((-dmat - adv) * 0.5);
                    upper.push((-dmat + adv) * 0.5);
                    diag.push(a + dmat + p.c * 0.5);
                    let forcing = (f_at(n, k, j) + f_at(n + 1, k, j)) * 0.5;
                    let lifted = a * (l_new[k] - l_old[k])
                        + (apply_op(&p, &l_new, k, z[k], dz) + apply_op(&p, &l_old, k, z[k], dz)) * 0.5;
                    r.push(a * u_old[k] - apply_op(&p, &u_old, k, z[k], dz) * 0.5 + forcing - lifted);
                }
                let x = block_thomas(&lower, &diag, &upper, &r, 1)?;
                let mut line = vec![Vector2::zeros(); nodes];
                for k in 0..nodes {
                    let u = if k == 0 || k == nodes - 1 { Vector2::zeros() } else { x[k - 1] };
                    line[k] = u + l_new[k];
                }
                Ok(line)
            })
            .collect();
        let mut next = StateField::zeros_dims(nodes, n2);
        for (j, line) in lines.into_iter().enumerate() {
            let line = line?;
            for k in 0..nodes {
                let v = next.at_mut(k, j);
                v[0] = line[k][0];
                v[1] = line[k][1];
            }
        }
        // the lift does not vanish at Z1max exactly; pin the far node
        for j in 0..n2 {
            let v = next.at_mut(nodes - 1, j);
            v[0] = 0.0;
            v[1] = 0.0;
        }
        if coeffs.delta > 0.0 {
            z2_sweep(&mut next, coeffs, n + 1, dt);
        }
        if !next.max_abs_all().is_finite() {
            return Err(Error::SolverDiverged {
                residual: f64::INFINITY,
                iterations: n + 1,
            });
        }
        out.levels[n + 1] = next;
    }
    Ok(out)
}

/// Backward Euler sweep `a ∂t u = δ ∂²z2 u` over every interior `z` node.
fn z2_sweep(f: &mut StateField, coeffs: &PrandtlCoefficients, n: usize, dt: f64) {
    let n2 = f.n2();
    if n2 < 3 {
        return;
    }
    let h = coeffs.x2_spacing;
    let nodes = f.n1();
    for c in 0..2 {
        let r: Vec<f64> = (0..n2)
            .map(|j| coeffs.delta * dt / (coeffs.at(n, j).a[c] * h * h))
            .collect();
        let lo: Vec<f64> = r.iter().map(|v| -v).collect();
        let di: Vec<f64> = r.iter().map(|v| 1.0 + 2.0 * v).collect();
        for k in 1..nodes - 1 {
            let y: Vec<f64> = (0..n2).map(|j| f.at(k, j)[c]).collect();
            let x = cyclic_tridiagonal(&lo, &di, &lo, &y);
            for j in 0..n2 {
                f.at_mut(k, j)[c] = x[j];
            }
        }
    }
}

/// Composite Simpson weights on the uniform `z` grid (trapezoid for odd cell counts).
pub fn z_weights(grid: &LayerGrid) -> Vec<f64> {
    let n = grid.nz;
    let h = grid.dz();
    if n.is_multiple_of(2) {
        (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect()
    } else {
        (0..=n)
            .map(|k| if k == 0 || k == n { 0.5 * h } else { h })
            .collect()
    }
}

fn d_z(f: &StateField, k: usize, j: usize, c: usize, dz: f64) -> f64 {
    let n = f.n1() - 1;
    let u = |m: usize| f.at(m, j)[c];
    if k == 0 {
        (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * dz)
    } else if k == n {
        (3.0 * u(n) - 4.0 * u(n - 1) + u(n - 2)) / (2.0 * dz)
    } else {
        (u(k + 1) - u(k - 1)) / (2.0 * dz)
    }
}

fn d_x2(f: &StateField, k: usize, j: usize, c: usize, h: f64) -> f64 {
    let n2 = f.n2();
    (f.at(k, (j + 1) % n2)[c] - f.at(k, (j + n2 - 1) % n2)[c]) / (2.0 * h)
}

fn derivative_field(f: &StateField, order: usize, dir: usize, dz: f64, h2: f64) -> StateField {
    let mut g = f.clone();
    for _ in 0..order {
        let src = g.clone();
        g = src.map(|k, j, _| {
            [0, 1, 2, 3].map(|c| {
                if dir == 0 {
                    d_z(&src, k, j, c, dz)
                } else {
                    d_x2(&src, k, j, c, h2)
                }
            })
        });
    }
    g
}

/// `‖⟨z⟩^l ∂t^k ∂z^{a1} ∂x2^{a2} u‖` over `(z, x2)` at level `n`, all components.
///
/// Time derivatives use backward differences over the stored levels, with
/// zero history before the first level.
pub fn weighted_norm(
    profile: &LayerProfile,
    n: usize,
    l: i32,
    k: usize,
    a1: usize,
    a2: usize,
    x2_spacing: f64,
) -> Result<f64> {
    if k > 2 || a1 > 2 || a2 > 2 {
        return Err(Error::InvalidInput("derivative orders above 2 are not supported".into()));
    }
    let level = |m: isize| -> StateField {
        if m < 0 {
            StateField::zeros_dims(profile.grid.nodes(), profile.n2)
        } else {
            profile.levels[m as usize].clone()
        }
    };
    let n = n as isize;
    let dt = profile.dt;
    let base = match k {
        0 => level(n),
        1 => {
            let mut f = level(n);
            f.axpy(-1.0, &level(n - 1));
            f.scale(1.0 / dt);
            f
        }
        _ => {
            let mut f = level(n);
            f.axpy(-2.0, &level(n - 1));
            f.axpy(1.0, &level(n - 2));
            f.scale(1.0 / (dt * dt));
            f
        }
    };
    let dz = profile.grid.dz();
    let g = derivative_field(&base, a1, 0, dz, x2_spacing);
    let g = derivative_field(&g, a2, 1, dz, x2_spacing);
    let w = z_weights(&profile.grid);
    let mut s = 0.0;
    for kk in 0..profile.grid.nodes() {
        let z = profile.grid.z(kk);
        let weight = (1.0 + z * z).powi(l);
        let mut row = 0.0;
        for j in 0..profile.n2 {
            let v = g.at(kk, j);
            row += v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3];
        }
        s += w[kk] * weight * row;
    }
    Ok((s * x2_spacing).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EquationOfState;

    fn series<F: Fn(f64) -> [f64; 2]>(count: usize, dt: f64, n2: usize, g: F) -> Vec<Vec<[f64; 2]>> {
        (0..count).map(|n| vec![g(n as f64 * dt); n2]).collect()
    }

    fn rhs_from<F: Fn(f64, f64) -> [f64; 2]>(
        grid: &LayerGrid,
        n2: usize,
        dt: f64,
        count: usize,
        f: F,
    ) -> LayerProfile {
        let mut p = LayerProfile::zeros(*grid, n2, dt, count);
        for n in 0..count {
            let t = n as f64 * dt;
            for k in 0..grid.nodes() {
                let v = f(grid.z(k), t);
                for j in 0..n2 {
                    let e = p.levels[n].at_mut(k, j);
                    e[0] = v[0];
                    e[1] = v[1];
                }
            }
        }
        p
    }

    #[test]
    fn constant_background_coefficients() {
        let bg = BackgroundState::ideal_at_rest();
        let s = ViscosityScaling::new(1.0, 0.0, 1.0, 0.1).unwrap();
        let c = PrandtlCoefficients::sample(&bg, &s, &[0.0, 0.5], &[0.0, 0.1]).unwrap();
        let p = c.at(0, 0);
        assert!((p.a[0] - 1.0).abs() < 1e-15 && (p.a[1] - 1.0).abs() < 1e-15);
        assert!((p.d[0] - 1.0).abs() < 1e-15 && (p.d[1] - 0.5).abs() < 1e-15);
        assert_eq!(p.b, Matrix2::zeros());
        assert_eq!(p.c, Matrix2::zeros());
    }

    #[test]
    fn isentropic_background_decouples() {
        let bg = BackgroundState::from_name(
            "isobaric_wave",
            &[1.0, 0.2, 2.0, 1.0],
            EquationOfState::isentropic(1.0, 1.4),
        );
        let bg = match bg {
            Ok(b) => b,
            Err(_) => BackgroundState::constant(1.0, 0.0, 0.0, 1.0, EquationOfState::isentropic(1.0, 1.4)).unwrap(),
        };
        let s = ViscosityScaling::default();
        let c = PrandtlCoefficients::sample(&bg, &s, &[0.0, 0.3, 0.7], &[0.0]).unwrap();
        for j in 0..3 {
            let p = c.at(0, j);
            assert!(p.b[(0, 1)].abs() < 1e-14 && p.b[(1, 0)].abs() < 1e-14);
            assert!(p.c[(0, 1)].abs() < 1e-14 && p.c[(1, 0)].abs() < 1e-14);
            assert!(p.a[0] > 0.0 && p.a[1] > 0.0);
        }
    }

    #[test]
    fn moving_wall_is_rejected() {
        let bg = BackgroundState::analytic(
            "slip",
            EquationOfState::ideal(),
            false,
            false,
            std::sync::Arc::new(|_, _, _| {
                [
                    crate::jet::Jet::constant(1.0),
                    crate::jet::Jet::constant(0.0),
                    crate::jet::Jet::constant(0.3),
                    crate::jet::Jet::constant(1.0),
                ]
            }),
        )
        .unwrap();
        let err = PrandtlCoefficients::sample(&bg, &ViscosityScaling::default(), &[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBackground(_)));
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let c = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0));
        let wall = series(11, 0.01, 3, |_| [0.0, 0.0]);
        let u = solve_prandtl(&c, None, &wall, &grid, 3, 0.01, &PrandtlOptions::default()).unwrap();
        assert!(u.levels.iter().all(|f| f.max_abs_all() == 0.0));
    }

    #[test]
    fn incompatible_data_needs_the_waiver() {
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let c = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0));
        let wall = series(3, 0.01, 1, |_| [1.0, 0.0]);
        let err = solve_prandtl(&c, None, &wall, &grid, 1, 0.01, &PrandtlOptions::default()).unwrap_err();
        assert!(matches!(err, Error::CompatibilityViolation(_)));
    }

    #[test]
    fn lift_examples() {
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let zero = lift_boundary_data(&[[0.0, 0.0]; 2], &grid);
        assert_eq!(zero.max_abs_all(), 0.0);
        let l = lift_boundary_data(&[[1.0, -2.0]], &grid);
        assert_eq!(l.at(0, 0)[0], -1.0);
        assert_eq!(l.at(0, 0)[1], 2.0);
        let p = PrandtlPoint::heat(1.0, 1.0);
        for z in [0.0, 0.3, 1.1] {
            // shifting by the lift moves −ℰ(L) into the right-hand side
            let gain = -lift_residual([1.0, 0.0], &p, z)[0];
            let expect = -(4.0 * z * z - 2.0) * (-z * z).exp();
            assert!((gain - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let e = crate::checks::prandtl_manufactured_errors(&[(50, 10), (100, 20), (200, 40)], false).unwrap();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "errors {e:?}");
        }
    }

    #[test]
    fn decoupled_case_matches_a_finer_oracle() {
        let (worst, tail) = crate::checks::prandtl_oracle_gap().unwrap();
        assert!(worst <= 1e-4, "{worst}");
        assert!(tail < 1e-8);
    }

    #[test]
    fn delta_sweep_leaves_x2_independent_data_alone() {
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let n2 = 8;
        let dt = 0.01;
        let base = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0));
        let wall = series(21, dt, n2, |t| [t * t, t]);
        let a = solve_prandtl(&base, None, &wall, &grid, n2, dt, &PrandtlOptions::default()).unwrap();
        let reg = base.clone().with_delta(0.3, 0.25);
        let b = solve_prandtl(&reg, None, &wall, &grid, n2, dt, &PrandtlOptions::default()).unwrap();
        for n in 0..21 {
            for k in 0..grid.nodes() {
                for j in 0..n2 {
                    for c in 0..2 {
                        assert!((a.at(n, k, j)[c] - b.at(n, k, j)[c]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn delta_sweep_smooths_x2_oscillations() {
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let n2 = 8;
        let dt = 0.01;
        let base = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0));
        let wall: Vec<Vec<[f64; 2]>> = (0..21)
            .map(|n| {
                let t = n as f64 * dt;
                (0..n2).map(|j| [t * if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0]).collect()
            })
            .collect();
        let a = solve_prandtl(&base, None, &wall, &grid, n2, dt, &PrandtlOptions::default()).unwrap();
        let reg = base.clone().with_delta(1.0, 0.25);
        let b = solve_prandtl(&reg, None, &wall, &grid, n2, dt, &PrandtlOptions::default()).unwrap();
        let k = 20;
        assert!(b.at(20, k, 0)[0].abs() < a.at(20, k, 0)[0].abs());
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let lo: Vec<f64> = (0..n).map(|j| -0.3 - 0.01 * j as f64).collect();
        let up: Vec<f64> = (0..n).map(|j| -0.2 + 0.02 * j as f64).collect();
        let di: Vec<f64> = (0..n).map(|j| 2.0 + 0.1 * j as f64).collect();
        let y: Vec<f64> = (0..n).map(|j| (j as f64).sin()).collect();
        let x = cyclic_tridiagonal(&lo, &di, &up, &y);
        for j in 0..n {
            let r = lo[j] * x[(j + n - 1) % n] + di[j] * x[j] + up[j] * x[(j + 1) % n];
            assert!((r - y[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_norms_of_an_exponential() {
        let grid = LayerGrid::new(24.0, 2400).unwrap();
        let mut p = LayerProfile::zeros(grid, 1, 0.1, 1);
        for k in 0..grid.nodes() {
            p.levels[0].at_mut(k, 0)[0] = (-grid.z(k)).exp();
        }
        let n0 = weighted_norm(&p, 0, 0, 0, 0, 0, 1.0).unwrap();
        assert!((n0 - 0.5f64.sqrt()).abs() < 1e-6, "{n0}");
        let n1 = weighted_norm(&p, 0, 1, 0, 0, 0, 1.0).unwrap();
        assert!((n1 - 3f64.sqrt() / 2.0).abs() < 1e-6, "{n1}");
        let zero = LayerProfile::zeros(grid, 1, 0.1, 1);
        assert_eq!(weighted_norm(&zero, 0, 2, 0, 1, 0, 1.0).unwrap(), 0.0);
    }

    fn base_estimate_constant(nz: usize, steps: usize) -> f64 {
        let t_end = 1.0;
        let dt = t_end / steps as f64;
        let grid = LayerGrid::new(16.0, nz).unwrap();
        let c = PrandtlCoefficients::uniform(PrandtlPoint {
            a: [1.0, 2.0],
            d: [1.0, 0.5],
            b: Matrix2::new(0.1, 0.05, -0.05, 0.1),
            c: Matrix2::new(0.2, 0.1, 0.1, 0.3),
        });
        let f = rhs_from(&grid, 1, dt, steps + 1, |z, t| {
            let e = (-z * z / 4.0).exp() * (2.0 * t).sin();
            [e, -0.5 * e * z]
        });
        let wall = series(steps + 1, dt, 1, |_| [0.0, 0.0]);
        let u = solve_prandtl(&c, Some(&f), &wall, &grid, 1, dt, &PrandtlOptions::default()).unwrap();
        let l = 2;
        let sup = (0..=steps)
            .map(|n| weighted_norm(&u, n, l, 0, 0, 0, 1.0).unwrap().powi(2))
            .fold(0.0, f64::max);
        let mut int = 0.0;
        for n in 0..=steps {
            let w = if n == 0 || n == steps { 0.5 } else { 1.0 };
            int += w * dt * weighted_norm(&f, n, l, 0, 0, 0, 1.0).unwrap().powi(2);
        }
        sup / int
    }

    #[test]
    fn weighted_base_estimate_constant_is_grid_independent() {
        let c: Vec<f64> = [(80, 20), (160, 40), (320, 80)]
            .iter()
            .map(|&(nz, st)| base_estimate_constant(nz, st))
            .collect();
        let (lo, hi) = c.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 2.0, "{c:?}");
    }

    #[test]
    fn flipped_tau_breaks_the_solve() {
        let c = PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 1.0)).with_flipped_tau();
        assert!(c.validate().is_err());
        assert!(crate::checks::prandtl_manufactured_errors(&[(50, 10)], true).is_err());
    }
}

//! Boundary operator ladder `ℒᵇ₋₁ … ℒᵇ₂`, the layer ODEs for `(Bⁱ₂, Bⁱ₃)`
//! and the inhomogeneities `Hⁱ` and `Fᵢ` that drive the ODE and Prandtl stages.
//!
//! The stretched operator is `ε⁻¹𝒜1∂z + 𝒜0∂t + 𝒜2∂2 + 𝒲 − ε²Λ` with
//! `∂1 = ε⁻¹∂z`. Every coefficient is expanded in `x1 = εz` around the wall
//! and the terms are sorted by their power of `ε`, up to `ε²`.

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::characteristic::{mat_vec, TransformedJets};
use crate::error::{Error, Result};
use crate::field::StateField;
use crate::model::{BackgroundState, ViscosityScaling};
use crate::prandtl::{check_wall_velocity, LayerProfile};

/// Derivative of a layer profile that a term acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deriv {
    Id,
    Z,
    ZZ,
    T,
    X2,
    X2X2,
    ZX2,
}

/// `M z^p / p! · D u`, with the factorial folded into `m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub zpow: i32,
    pub deriv: Deriv,
    pub m: Matrix4<f64>,
}

/// Terms of `ℒᵇ₋₁, ℒᵇ₀, ℒᵇ₁, ℒᵇ₂` at one wall point.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPoint {
    pub alpha: f64,
    pub orders: [Vec<Term>; 4],
}

impl OperatorPoint {
    pub fn from_jets(tj: &TransformedJets) -> Self {
        let d = |m: &crate::jet::JetMatrix4, k: usize| m.deriv(k, 0, 0);
        let fact = [1.0, 1.0, 0.5, 1.0 / 6.0];
        let pi1 = tj.cal_p1 + tj.cal_i1;
        let pi2 = tj.cal_p2 + tj.cal_i2;
        let q = tj.cal_q1 + tj.cal_q2;
        let mut orders: [Vec<Term>; 4] = Default::default();
        let mut push = |order: usize, zpow: i32, deriv: Deriv, m: Matrix4<f64>| {
            if m.iter().any(|&v| v != 0.0) {
                orders[order].push(Term { zpow, deriv, m });
            }
        };
        // Unexpanded operator: (power of ε, derivative, coefficient).
        let base: [(usize, Deriv, &crate::jet::JetMatrix4, f64); 10] = [
            (0, Deriv::Z, &tj.cal_a1, 1.0),
            (1, Deriv::T, &tj.cal_a0, 1.0),
            (1, Deriv::X2, &tj.cal_a2, 1.0),
            (1, Deriv::Id, &tj.cal_w, 1.0),
            (1, Deriv::ZZ, &tj.cal_k11, -1.0),
            (2, Deriv::ZX2, &tj.cal_k12, -2.0),
            (2, Deriv::Z, &pi1, -1.0),
            (3, Deriv::X2X2, &tj.cal_k22, -1.0),
            (3, Deriv::X2, &pi2, -1.0),
            (3, Deriv::Id, &q, -1.0),
        ];
        for (start, deriv, m, sign) in base {
            for k in 0..=(3 - start) {
                push(start + k, k as i32, deriv, d(m, k) * (sign * fact[k]));
            }
        }
        Self {
            alpha: tj.alpha,
            orders,
        }
    }
}

/// Boundary operator terms on every `(level, x2)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryOperatorCoeffs {
    /// `points[n][j]`; a single level and a single column mean "constant".
    pub points: Vec<Vec<OperatorPoint>>,
    pub x2_spacing: f64,
}

impl BoundaryOperatorCoeffs {
    pub fn sample(
        bg: &BackgroundState,
        scaling: &ViscosityScaling,
        x2: &[f64],
        level_times: &[f64],
    ) -> Result<Self> {
        let times: &[f64] = if bg.time_dependent { level_times } else { &level_times[..1] };
        let cols: &[f64] = if bg.is_constant() { &x2[..1] } else { x2 };
        let points = times
            .iter()
            .map(|&t| {
                cols.iter()
                    .map(|&y| {
                        check_wall_velocity(bg, y, t)?;
                        Ok(OperatorPoint::from_jets(&TransformedJets::at(bg, scaling, 0.0, y, t)?))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let x2_spacing = if x2.len() > 1 { x2[1] - x2[0] } else { 1.0 };
        Ok(Self { points, x2_spacing })
    }

    pub fn at(&self, n: usize, j: usize) -> &OperatorPoint {
        let row = &self.points[n.min(self.points.len() - 1)];
        &row[j.min(row.len() - 1)]
    }

    pub fn sound_speed(&self, n: usize, j: usize) -> f64 {
        let a = self.at(n, j).alpha;
        (a * a + 1.0).sqrt()
    }

    fn check_columns(&self, n2: usize) -> Result<()> {
        let cols = self.points[0].len();
        if cols > 1 && cols != n2 {
            return Err(Error::GridMismatch(format!(
                "operator sampled on {cols} columns, profile has {n2}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerOptions {
    /// Largest admissible `|H|` on `[0.9 Z1max, Z1max]`.
    pub tail_tol: f64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self { tail_tol: 1e-10 }
    }
}

/// Discrete derivatives of a profile, second order in `z`, `x2` and `t`:
/// one-sided at the ends of the `z` interval, backward in time.
struct ProfileDerivs<'a> {
    p: &'a LayerProfile,
    h2: f64,
}

impl ProfileDerivs<'_> {
    fn z_at(&self, n: usize, k: usize, j: usize) -> [f64; 4] {
        let dz = self.p.grid.dz();
        let nz = self.p.grid.nz;
        let u = |m: usize| self.p.at(n, m, j);
        let (a, b, c, w) = if k == 0 {
            ((0, -3.0), (1, 4.0), (2, -1.0), 0.5 / dz)
        } else if k == nz {
            ((nz, 3.0), (nz - 1, -4.0), (nz - 2, 1.0), 0.5 / dz)
        } else {
            ((k + 1, 1.0), (k - 1, -1.0), (k, 0.0), 0.5 / dz)
        };
        let (ua, ub, uc) = (u(a.0), u(b.0), u(c.0));
        [0, 1, 2, 3].map(|i| w * (a.1 * ua[i] + b.1 * ub[i] + c.1 * uc[i]))
    }

    fn zz_at(&self, n: usize, k: usize, j: usize) -> [f64; 4] {
        let dz = self.p.grid.dz();
        let nz = self.p.grid.nz;
        let u = |m: usize| *self.p.at(n, m, j);
        let h = 1.0 / (dz * dz);
        let st: [(usize, f64); 4] = if k == 0 {
            [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
        } else if k == nz {
            [(nz, 2.0), (nz - 1, -5.0), (nz - 2, 4.0), (nz - 3, -1.0)]
        } else {
            [(k - 1, 1.0), (k, -2.0), (k + 1, 1.0), (k, 0.0)]
        };
        let mut out = [0.0; 4];
        for (m, c) in st {
            let v = u(m);
            for i in 0..4 {
                out[i] += h * c * v[i];
            }
        }
        out
    }

    fn x2_at(&self, n: usize, k: usize, j: usize, f: impl Fn(usize, usize, usize) -> [f64; 4]) -> [f64; 4] {
        let n2 = self.p.n2;
        if n2 < 3 {
            return [0.0; 4];
        }
        let (a, b) = (f(n, k, (j + 1) % n2), f(n, k, (j + n2 - 1) % n2));
        let w = 0.5 / self.h2;
        [0, 1, 2, 3].map(|i| w * (a[i] - b[i]))
    }

    fn x2x2_at(&self, n: usize, k: usize, j: usize) -> [f64; 4] {
        let n2 = self.p.n2;
        if n2 < 3 {
            return [0.0; 4];
        }
        let (a, b, c) = (
            self.p.at(n, k, (j + 1) % n2),
            self.p.at(n, k, j),
            self.p.at(n, k, (j + n2 - 1) % n2),
        );
        let w = 1.0 / (self.h2 * self.h2);
        [0, 1, 2, 3].map(|i| w * (a[i] - 2.0 * b[i] + c[i]))
    }

    /// Three-level backward difference; levels before the first count as zero.
    fn t_at(&self, n: usize, k: usize, j: usize) -> [f64; 4] {
        let dt = self.p.dt;
        let u = |m: usize| self.p.at(m, k, j);
        let mut out = [0.0; 4];
        for (back, c) in [(0usize, 3.0), (1, -4.0), (2, 1.0)] {
            if back <= n {
                let v = u(n - back);
                for i in 0..4 {
                    out[i] += 0.5 * c * v[i] / dt;
                }
            }
        }
        out
    }

    fn eval(&self, d: Deriv, n: usize, k: usize, j: usize) -> [f64; 4] {
        match d {
            Deriv::Id => *self.p.at(n, k, j),
            Deriv::Z => self.z_at(n, k, j),
            Deriv::ZZ => self.zz_at(n, k, j),
            Deriv::T => self.t_at(n, k, j),
            Deriv::X2 => self.x2_at(n, k, j, |n, k, j| *self.p.at(n, k, j)),
            Deriv::X2X2 => self.x2x2_at(n, k, j),
            Deriv::ZX2 => self.x2_at(n, k, j, |n, k, j| self.z_at(n, k, j)),
        }
    }
}

/// `Σ M z^p D u` for one set of terms, given the derivatives of `u` at `z`.
pub fn apply_terms(terms: &[Term], z: f64, derivs: impl Fn(Deriv) -> [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for t in terms {
        let v = mat_vec(&t.m, &derivs(t.deriv));
        let w = z.powi(t.zpow);
        for i in 0..4 {
            out[i] += w * v[i];
        }
    }
    out
}

fn order_slot(order: i32) -> Result<usize> {
    match order {
        -1..=2 => Ok((order + 1) as usize),
        _ => Err(Error::InvalidInput(format!("boundary operator order {order} is not in -1..=2"))),
    }
}

/// `Σ ℒᵇ_order u` over the given `(order, profile)` pairs, all on the same grid.
fn apply_sum(coeffs: &BoundaryOperatorCoeffs, parts: &[(i32, &LayerProfile)]) -> Result<LayerProfile> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidInput("no profiles to apply the operator to".into()))?
        .1;
    let slots = parts
        .iter()
        .map(|(o, p)| {
            if p.grid != first.grid || p.n2 != first.n2 || p.count() != first.count() {
                return Err(Error::GridMismatch("layer profiles live on different grids".into()));
            }
            order_slot(*o)
        })
        .collect::<Result<Vec<_>>>()?;
    coeffs.check_columns(first.n2)?;
    let needs_t = parts
        .iter()
        .zip(&slots)
        .any(|(_, &s)| coeffs.points.iter().flatten().any(|pt| pt.orders[s].iter().any(|t| t.deriv == Deriv::T)));
    if needs_t {
        for (_, p) in parts {
            if p.levels[0].max_abs_all() != 0.0 {
                return Err(Error::InsufficientHistory { level: 0 });
            }
        }
    }
    let derivs: Vec<ProfileDerivs> = parts
        .iter()
        .map(|(_, p)| ProfileDerivs {
            p,
            h2: coeffs.x2_spacing,
        })
        .collect();
    let grid = first.grid;
    let n2 = first.n2;
    let levels = (0..first.count())
        .into_par_iter()
        .map(|n| {
            let mut f = StateField::zeros_dims(grid.nodes(), n2);
            for j in 0..n2 {
                let pt = coeffs.at(n, j);
                for k in 0..grid.nodes() {
                    let z = grid.z(k);
                    let out = f.at_mut(k, j);
                    for (d, &s) in derivs.iter().zip(&slots) {
                        let v = apply_terms(&pt.orders[s], z, |dv| d.eval(dv, n, k, j));
                        for i in 0..4 {
                            out[i] += v[i];
                        }
                    }
                }
            }
            f
        })
        .collect();
    Ok(LayerProfile {
        grid,
        n2,
        dt: first.dt,
        levels,
        decay_order: 0,
    })
}

/// `ℒᵇ_order` applied to a profile.
pub fn apply_lb(order: i32, coeffs: &BoundaryOperatorCoeffs, profile: &LayerProfile) -> Result<LayerProfile> {
    apply_sum(coeffs, &[(order, profile)])
}

fn keep_components(mut p: LayerProfile, keep: [bool; 4], sign: f64) -> LayerProfile {
    for f in &mut p.levels {
        for v in f.data_mut() {
            for i in 0..4 {
                v[i] = if keep[i] { sign * v[i] } else { 0.0 };
            }
        }
    }
    p
}

/// Terms of `ℒᵇ₀Bⁱ⁻¹ + ℒᵇ₁Bⁱ⁻² + …` that exist, starting from `ℒᵇ_first`.
fn ladder(first: i32, layers: &[LayerProfile], top: usize) -> Vec<(i32, &LayerProfile)> {
    (0..=2 - first)
        .filter_map(|s| {
            let idx = top as i64 - s as i64;
            (idx >= 0).then(|| (first + s, &layers[idx as usize]))
        })
        .collect()
}

/// `Hⁱ = −(ℒᵇ₀Bⁱ⁻¹ + ℒᵇ₁Bⁱ⁻² + ℒᵇ₂Bⁱ⁻³)` in components 2 and 3.
///
/// `prior` holds `B⁰ … Bⁱ⁻¹`.
pub fn layer_ode_rhs(i: usize, coeffs: &BoundaryOperatorCoeffs, prior: &[LayerProfile]) -> Result<LayerProfile> {
    if i == 0 {
        return Err(Error::InvalidInput("the order-zero layer ODE has no right-hand side".into()));
    }
    if prior.len() < i {
        return Err(Error::MissingPriorLayer { order: prior.len() });
    }
    let sum = apply_sum(coeffs, &ladder(0, prior, i - 1))?;
    Ok(keep_components(sum, [false, false, true, true], -1.0))
}

/// Solves `𝒜1m ∂z B = H` in components 2 and 3 with decay at infinity:
/// `B2 = −∫_z^Z H2 / s`, `B3 = ∫_z^Z H3 / s`, `s = √(α² + 1)`.
pub fn solve_layer_ode(h: &LayerProfile, coeffs: &BoundaryOperatorCoeffs, opts: &LayerOptions) -> Result<LayerProfile> {
    coeffs.check_columns(h.n2)?;
    let tail = h.tail_max(&[2, 3]);
    if tail > opts.tail_tol {
        return Err(Error::NonDecayingRhs {
            tail,
            tol: opts.tail_tol,
        });
    }
    let grid = h.grid;
    let nz = grid.nz;
    if nz < 3 {
        return Err(Error::InvalidInput("layer grid needs at least 3 cells".into()));
    }
    let dz = grid.dz();
    let levels = (0..h.count())
        .into_par_iter()
        .map(|n| {
            let mut b = StateField::zeros_dims(grid.nodes(), h.n2);
            for j in 0..h.n2 {
                let s = coeffs.sound_speed(n, j);
                for (c, sign) in [(2usize, -1.0), (3usize, 1.0)] {
                    let f = |k: usize| h.at(n, k, j)[c];
                    let mut acc = 0.0;
                    for k in (0..nz).rev() {
                        let piece = if k == 0 {
                            9.0 * f(0) + 19.0 * f(1) - 5.0 * f(2) + f(3)
                        } else if k == nz - 1 {
                            f(nz - 3) - 5.0 * f(nz - 2) + 19.0 * f(nz - 1) + 9.0 * f(nz)
                        } else {
                            -f(k - 1) + 13.0 * f(k) + 13.0 * f(k + 1) - f(k + 2)
                        };
                        acc += piece * dz / 24.0;
                        b.at_mut(k, j)[c] = sign * acc / s;
                    }
                }
            }
            b
        })
        .collect();
    Ok(LayerProfile {
        grid,
        n2: h.n2,
        dt: h.dt,
        levels,
        decay_order: 0,
    })
}

/// `Fᵢ = −[ℒᵇ₀(0, 0, Bⁱ₂, Bⁱ₃)]_I − [ℒᵇ₁Bⁱ⁻¹ + ℒᵇ₂Bⁱ⁻²]_I` in components 0 and 1.
///
/// `prior` holds `B⁰ … Bⁱ⁻¹`; `b_ii` carries `(Bⁱ₂, Bⁱ₃)` in components 2 and 3.
pub fn assemble_f(
    i: usize,
    coeffs: &BoundaryOperatorCoeffs,
    prior: &[LayerProfile],
    b_ii: &LayerProfile,
) -> Result<LayerProfile> {
    if prior.len() < i {
        return Err(Error::MissingPriorLayer { order: prior.len() });
    }
    let own = keep_components(b_ii.clone(), [false, false, true, true], 1.0);
    let mut parts: Vec<(i32, &LayerProfile)> = vec![(0, &own)];
    if i >= 1 {
        parts.extend(ladder(1, prior, i - 1));
    }
    let sum = apply_sum(coeffs, &parts)?;
    Ok(keep_components(sum, [true, true, false, false], -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristic::point_coefficients;
    use crate::grid::LayerGrid;
    use crate::model::EquationOfState;
    use crate::prandtl::weighted_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ideal_coeffs(n2: usize) -> (BoundaryOperatorCoeffs, Vec<f64>) {
        let bg = BackgroundState::ideal_at_rest();
        let x2: Vec<f64> = (0..n2).map(|j| j as f64 / n2 as f64).collect();
        let c = BoundaryOperatorCoeffs::sample(&bg, &ViscosityScaling::default(), &x2, &[0.0]).unwrap();
        (c, x2)
    }

    fn profile_from(
        grid: LayerGrid,
        x2: &[f64],
        dt: f64,
        count: usize,
        f: impl Fn(f64, f64, f64) -> [f64; 4],
    ) -> LayerProfile {
        let mut p = LayerProfile::zeros(grid, x2.len(), dt, count);
        for n in 0..count {
            for k in 0..grid.nodes() {
                for (j, &y) in x2.iter().enumerate() {
                    *p.levels[n].at_mut(k, j) = f(grid.z(k), y, n as f64 * dt);
                }
            }
        }
        p
    }

    fn max_diff(p: &LayerProfile, f: impl Fn(f64, f64, f64) -> [f64; 4], x2: &[f64], comps: &[usize]) -> f64 {
        max_diff_from(p, 0, f, x2, comps)
    }

    fn max_diff_from(
        p: &LayerProfile,
        first: usize,
        f: impl Fn(f64, f64, f64) -> [f64; 4],
        x2: &[f64],
        comps: &[usize],
    ) -> f64 {
        let mut m: f64 = 0.0;
        for n in first..p.count() {
            for k in 0..p.grid.nodes() {
                for (j, &y) in x2.iter().enumerate() {
                    let e = f(p.grid.z(k), y, n as f64 * p.dt);
                    for &c in comps {
                        m = m.max((p.at(n, k, j)[c] - e[c]).abs());
                    }
                }
            }
        }
        m
    }

    #[test]
    fn order_minus_one_on_an_outgoing_profile() {
        let (c, x2) = ideal_coeffs(1);
        assert!((c.at(0, 0).alpha - 1.0).abs() < 1e-14);
        let grid = LayerGrid::new(10.0, 2000).unwrap();
        let p = profile_from(grid, &x2, 0.1, 3, |z, _, _| [0.0, 0.0, (-z).exp(), 0.0]);
        let out = apply_lb(-1, &c, &p).unwrap();
        // 𝒜1m row 2 is (0, 0, √2, 0), so ∂z e^{−z} gives −√2 e^{−z}
        let err = max_diff(&out, |z, _, _| [0.0, 0.0, -2f64.sqrt() * (-z).exp(), 0.0], &x2, &[0, 1, 2, 3]);
        // the one-sided wall stencil errs by dz² f‴/3
        let dz = grid.dz();
        assert!(err < 0.5 * dz * dz * 2f64.sqrt(), "{err}");
        let flat = profile_from(grid, &x2, 0.1, 3, |_, _, _| [1.0, -2.0, 3.0, 0.5]);
        assert!(apply_lb(-1, &c, &flat).unwrap().levels.iter().all(|f| f.max_abs_all() < 1e-12));
    }

    #[test]
    fn order_minus_one_never_touches_the_first_two_components() {
        let (c, x2) = ideal_coeffs(4);
        let grid = LayerGrid::new(8.0, 80).unwrap();
        let p = profile_from(grid, &x2, 0.1, 3, |z, y, t| {
            [z.sin(), (z * y).cos() + t, (-z).exp(), z * z]
        });
        let out = apply_lb(-1, &c, &p).unwrap();
        for f in &out.levels {
            assert_eq!(f.max_abs(0), 0.0);
            assert_eq!(f.max_abs(1), 0.0);
        }
    }

    #[test]
    fn constant_backgrounds_have_no_taylor_or_frame_terms() {
        for bg in [
            BackgroundState::ideal_at_rest(),
            BackgroundState::constant(1.3, 0.0, 0.0, 0.7, EquationOfState::isentropic(1.0, 1.4)).unwrap(),
        ] {
            let c = BoundaryOperatorCoeffs::sample(&bg, &ViscosityScaling::default(), &[0.0], &[0.0]).unwrap();
            let pt = c.at(0, 0);
            for (o, terms) in pt.orders.iter().enumerate() {
                for t in terms {
                    assert_eq!(t.zpow, 0);
                    assert_ne!(t.deriv, Deriv::Id);
                    if o >= 2 {
                        assert!(t.deriv != Deriv::Z && t.deriv != Deriv::X2, "{t:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn first_right_hand_side_is_the_a2_row() {
        let n2 = 32;
        let (c, x2) = ideal_coeffs(n2);
        let grid = LayerGrid::new(12.0, 240).unwrap();
        let h = |y: f64, t: f64| t * t * (2.0 * PI * y).sin();
        let hy = |y: f64, t: f64| t * t * 2.0 * PI * (2.0 * PI * y).cos();
        let b0 = profile_from(grid, &x2, 0.05, 5, |z, y, t| [(-z).exp() * h(y, t) * (-z * z / 8.0).exp(), 0.0, 0.0, 0.0]);
        let rhs = layer_ode_rhs(1, &c, &[b0]).unwrap();
        let pref = (2.0f64 / 2.0).sqrt();
        let expect = |z: f64, y: f64, t: f64| {
            let v = -pref * (-z).exp() * (-z * z / 8.0).exp() * hy(y, t);
            [0.0, 0.0, v, v]
        };
        // the backward stencil is exact on t² from the third level on
        let err = max_diff_from(&rhs, 2, expect, &x2, &[0, 1, 2, 3]);
        assert!(err < 0.02 * 0.04 * 2.0 * PI, "{err}");
        let zero = LayerProfile::zeros(grid, n2, 0.05, 5);
        assert_eq!(layer_ode_rhs(1, &c, &[zero]).unwrap().levels.iter().map(|f| f.max_abs_all()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn layer_ode_of_an_exponential() {
        let (c, x2) = ideal_coeffs(1);
        let grid = LayerGrid::new(30.0, 3000).unwrap();
        let mut h = profile_from(grid, &x2, 0.1, 1, |z, _, _| [0.0, 0.0, (-z).exp(), (-z).exp()]);
        let opts = LayerOptions { tail_tol: 1e-10 };
        let b = solve_layer_ode(&h, &c, &opts).unwrap();
        let s = 2f64.sqrt();
        // B2 = −e^{−z}/√2 up to the e^{−30} truncation
        let err = max_diff(&b, |z, _, _| [0.0, 0.0, -((-z).exp() - (-30.0f64).exp()) / s, 0.0], &x2, &[2]);
        assert!(err < 1e-8, "{err}");
        for k in 0..grid.nodes() {
            assert_eq!(b.at(0, k, 0)[3], -b.at(0, k, 0)[2]);
        }
        // residual of s ∂z B2 = H2 is second order
        let dz = grid.dz();
        for k in 1..grid.nz {
            let d = (b.at(0, k + 1, 0)[2] - b.at(0, k - 1, 0)[2]) / (2.0 * dz);
            assert!((s * d - h.at(0, k, 0)[2]).abs() < dz * dz);
        }
        for v in h.levels[0].data_mut() {
            v[2] = 0.0;
            v[3] = 0.0;
        }
        assert_eq!(solve_layer_ode(&h, &c, &opts).unwrap().levels[0].max_abs_all(), 0.0);
    }

    #[test]
    fn layer_ode_rejects_slow_decay() {
        let (c, x2) = ideal_coeffs(1);
        let grid = LayerGrid::new(10.0, 100).unwrap();
        let h = profile_from(grid, &x2, 0.1, 1, |z, _, _| [0.0, 0.0, 1.0 / (1.0 + z), 0.0]);
        let err = solve_layer_ode(&h, &c, &LayerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonDecayingRhs { .. }));
    }

    #[test]
    fn layer_ode_output_keeps_weighted_decay() {
        let (c, x2) = ideal_coeffs(1);
        let grid = LayerGrid::new(16.0, 1600).unwrap();
        let l = 3;
        let h = profile_from(grid, &x2, 0.1, 1, |z, _, _| {
            let v = (1.0 + z * z).powf(-(l as f64) / 2.0) * (-z * z / 4.0).exp();
            [0.0, 0.0, v, -v]
        });
        let b = solve_layer_ode(&h, &c, &LayerOptions::default()).unwrap();
        let wn = weighted_norm(&b, 0, l, 0, 0, 0, 1.0).unwrap();
        assert!(wn.is_finite() && wn < 1.0);
        assert!(b.tail_max(&[2, 3]) < 1e-10);
    }

    #[test]
    fn first_forcing_vanishes_for_a_constant_ideal_background() {
        let n2 = 16;
        let (c, x2) = ideal_coeffs(n2);
        let grid = LayerGrid::new(10.0, 200).unwrap();
        let b0 = profile_from(grid, &x2, 0.1, 4, |z, y, t| {
            [(-z).exp() * (2.0 * PI * y).sin() * t, (-z * z).exp() * (2.0 * PI * y).cos() * t, 0.0, 0.0]
        });
        let b1 = LayerProfile::zeros(grid, n2, 0.1, 4);
        let f = assemble_f(1, &c, &[b0], &b1).unwrap();
        assert!(f.levels.iter().all(|l| l.max_abs_all() < 1e-12));
        let zero = LayerProfile::zeros(grid, n2, 0.1, 4);
        let f = assemble_f(1, &c, std::slice::from_ref(&zero), &zero).unwrap();
        assert!(f.levels.iter().all(|l| l.max_abs_all() == 0.0));
    }

    #[test]
    fn second_forcing_from_a_flat_outgoing_sum() {
        let n2 = 32;
        let bg = BackgroundState::constant(1.2, 0.0, 0.0, 0.8, EquationOfState::isentropic(1.0, 1.4)).unwrap();
        let s = ViscosityScaling::default();
        let x2: Vec<f64> = (0..n2).map(|j| j as f64 / n2 as f64).collect();
        let c = BoundaryOperatorCoeffs::sample(&bg, &s, &x2, &[0.0]).unwrap();
        let tc = point_coefficients(&bg, &s, 0.0, 0.0, 0.0).unwrap();
        let alpha = tc.alpha;
        let grid = LayerGrid::new(5.0, 50).unwrap();
        let dt = 0.05;
        let phi = |y: f64, t: f64| t * t * (2.0 * PI * y).sin();
        let b2 = profile_from(grid, &x2, dt, 5, |_, y, t| [0.0, 0.0, phi(y, t), 0.0]);
        let zero = LayerProfile::zeros(grid, n2, dt, 5);
        let f = assemble_f(2, &c, &[zero.clone(), zero], &b2).unwrap();
        let pref = ((alpha * alpha + 1.0) / 2.0).sqrt();
        let expect = |_: f64, y: f64, t: f64| {
            [
                -pref * t * t * 2.0 * PI * (2.0 * PI * y).cos(),
                -tc.eta[1] * 2.0 * t * (2.0 * PI * y).sin(),
                0.0,
                0.0,
            ]
        };
        let err = max_diff_from(&f, 2, expect, &x2, &[0, 1, 2, 3]);
        let h2 = 1.0 / n2 as f64;
        assert!(err < 0.25 * 0.04 * (2.0 * PI).powi(3) * h2 * h2 / 6.0 * 4.0 + 1e-12, "{err}");
    }

    #[test]
    fn assembly_is_linear() {
        let n2 = 6;
        let bg = BackgroundState::from_name("isobaric_wave", &[1.0, 0.1, 2.0 * PI, 1.0], EquationOfState::ideal()).unwrap();
        let x2: Vec<f64> = (0..n2).map(|j| j as f64 / n2 as f64).collect();
        let c = BoundaryOperatorCoeffs::sample(&bg, &ViscosityScaling::default(), &x2, &[0.0]).unwrap();
        let grid = LayerGrid::new(4.0, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut random = || {
            let mut p = LayerProfile::zeros(grid, n2, 0.1, 4);
            for f in p.levels.iter_mut().skip(1) {
                for v in f.data_mut() {
                    *v = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
                }
            }
            p
        };
        let (a, b) = (random(), random());
        let (a2, b2) = (random(), random());
        let mut ab = a.clone();
        let mut ab2 = a2.clone();
        for n in 0..4 {
            ab.levels[n].lincomb(2.0, -3.0, &b.levels[n]);
            ab2.levels[n].lincomb(2.0, -3.0, &b2.levels[n]);
        }
        let check = |x: LayerProfile, y: LayerProfile, xy: LayerProfile| {
            let mut worst: f64 = 0.0;
            for n in 0..4 {
                for (i, v) in xy.levels[n].data().iter().enumerate() {
                    let (p, q) = (x.levels[n].data()[i], y.levels[n].data()[i]);
                    for c in 0..4 {
                        worst = worst.max((v[c] - (2.0 * p[c] - 3.0 * q[c])).abs());
                    }
                }
            }
            assert!(worst < 1e-12 * (1.0 + xy.levels.iter().map(|f| f.max_abs_all()).fold(0.0, f64::max)), "{worst}");
        };
        for order in -1..=2 {
            check(apply_lb(order, &c, &a).unwrap(), apply_lb(order, &c, &b).unwrap(), apply_lb(order, &c, &ab).unwrap());
        }
        check(
            layer_ode_rhs(2, &c, &[a.clone(), a2.clone()]).unwrap(),
            layer_ode_rhs(2, &c, &[b.clone(), b2.clone()]).unwrap(),
            layer_ode_rhs(2, &c, &[ab.clone(), ab2.clone()]).unwrap(),
        );
        check(
            assemble_f(1, &c, std::slice::from_ref(&a), &a2).unwrap(),
            assemble_f(1, &c, std::slice::from_ref(&b), &b2).unwrap(),
            assemble_f(1, &c, &[ab.clone()], &ab2).unwrap(),
        );
    }

    #[test]
    fn missing_prior_layers_are_reported() {
        let (c, _) = ideal_coeffs(1);
        let grid = LayerGrid::new(4.0, 20).unwrap();
        let p = LayerProfile::zeros(grid, 1, 0.1, 3);
        assert!(matches!(layer_ode_rhs(2, &c, std::slice::from_ref(&p)), Err(Error::MissingPriorLayer { .. })));
        assert!(matches!(assemble_f(2, &c, std::slice::from_ref(&p), &p), Err(Error::MissingPriorLayer { .. })));
        let mut started = LayerProfile::zeros(grid, 1, 0.1, 3);
        started.levels[0].at_mut(3, 0)[0] = 1.0;
        assert!(matches!(layer_ode_rhs(1, &c, &[started]), Err(Error::InsufficientHistory { .. })));
    }

    /// The ladder reproduces the stretched operator evaluated with coefficients
    /// at `x1 = εz`, up to `O(ε³)`.
    #[test]
    fn ladder_matches_the_stretched_operator() {
        let bg = BackgroundState::analytic(
            "graded",
            EquationOfState::ideal(),
            false,
            true,
            Arc::new(|x1, x2, t| {
                let s = (*x2 * 1.3 + *t * 0.7).sin() * 0.2 + 1.0;
                [
                    s * (*x1 * 0.4 + *t * 0.3).exp(),
                    *x1 * (*x2).cos() * 0.2,
                    (*x1 * 0.5).sin() * 0.3,
                    s.recip() * 1.1 + *x1 * *x1 * 0.1,
                ]
            }),
        )
        .unwrap();
        let s = ViscosityScaling::new(0.8, 0.3, 1.2, 0.1).unwrap();
        let (z, x2, t): (f64, f64, f64) = (0.7, 0.4, 0.2);
        let pt = OperatorPoint::from_jets(&TransformedJets::at(&bg, &s, 0.0, x2, t).unwrap());
        // B(z, x2, t) = e^{−z} (1 + x2) (1 + t) per component, with weights
        let w = [1.0, -0.5, 0.8, 0.3];
        let g = |d: Deriv| {
            let e = (-z).exp();
            let (a, b) = (1.0 + x2 * x2, 1.0 + t * t);
            let v = match d {
                Deriv::Id => e * a * b,
                Deriv::Z => -e * a * b,
                Deriv::ZZ => e * a * b,
                Deriv::T => e * a * 2.0 * t,
                Deriv::X2 => e * 2.0 * x2 * b,
                Deriv::X2X2 => e * 2.0 * b,
                Deriv::ZX2 => -e * 2.0 * x2 * b,
            };
            w.map(|c| c * v)
        };
        let full = |eps: f64| {
            let c = point_coefficients(&bg, &s, eps * z, x2, t).unwrap();
            let terms: [(Matrix4<f64>, Deriv, f64); 10] = [
                (c.cal_a1(), Deriv::Z, 1.0 / eps),
                (c.cal_a0, Deriv::T, 1.0),
                (c.cal_a2, Deriv::X2, 1.0),
                (c.cal_w, Deriv::Id, 1.0),
                (c.k11(), Deriv::ZZ, -1.0),
                (c.k12(), Deriv::ZX2, -2.0 * eps),
                (c.cal_p1 + c.cal_i1, Deriv::Z, -eps),
                (c.k22(), Deriv::X2X2, -eps * eps),
                (c.cal_p2 + c.cal_i2, Deriv::X2, -eps * eps),
                (c.cal_q1 + c.cal_q2, Deriv::Id, -eps * eps),
            ];
            let mut out = [0.0; 4];
            for (m, d, f) in terms {
                let v = mat_vec(&m, &g(d));
                for i in 0..4 {
                    out[i] += f * v[i];
                }
            }
            out
        };
        let ladder = |eps: f64| {
            let mut out = [0.0; 4];
            for (o, terms) in pt.orders.iter().enumerate() {
                let v = apply_terms(terms, z, g);
                let f = eps.powi(o as i32 - 1);
                for i in 0..4 {
                    out[i] += f * v[i];
                }
            }
            out
        };
        let gap = |eps: f64| {
            let (a, b) = (full(eps), ladder(eps));
            (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (gap(0.02), gap(0.01));
        assert!(e1 > 0.0 && (e1 / e2).log2() > 2.7, "{e1} {e2}");
        assert!(e2 < 1e-4);
    }
}

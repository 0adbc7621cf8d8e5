//! Four-component grid functions and the difference operators acting on them.

use crate::grid::Grid;

/// A 4-component grid function, node `(i, j)` stored at `i * n2 + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    n1: usize,
    n2: usize,
    data: Vec<[f64; 4]>,
}

impl StateField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::zeros_dims(grid.n1(), grid.n2())
    }

    pub fn zeros_dims(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            data: vec![[0.0; 4]; n1 * n2],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> [f64; 4]) -> Self {
        let mut out = Self::zeros(grid);
        for (i, &x1) in grid.x1().iter().enumerate() {
            for (j, &x2) in grid.x2().iter().enumerate() {
                out.data[i * grid.n2() + j] = f(x1, x2);
            }
        }
        out
    }

    pub fn from_data(n1: usize, n2: usize, data: Vec<[f64; 4]>) -> Self {
        assert_eq!(data.len(), n1 * n2, "field data has the wrong length");
        Self { n1, n2, data }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.n1 == grid.n1() && self.n2 == grid.n2()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[f64; 4] {
        &self.data[i * self.n2 + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64; 4] {
        &mut self.data[i * self.n2 + j]
    }

    pub fn data(&self) -> &[[f64; 4]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 4]] {
        &mut self.data
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &StateField) {
        for (u, v) in self.data.iter_mut().zip(other.data.iter()) {
            for c in 0..4 {
                u[c] += a * v[c];
            }
        }
    }

    /// `self = a * self + b * other`.
    pub fn lincomb(&mut self, a: f64, b: f64, other: &StateField) {
        for (u, v) in self.data.iter_mut().zip(other.data.iter()) {
            for c in 0..4 {
                u[c] = a * u[c] + b * v[c];
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for u in self.data.iter_mut() {
            for x in u.iter_mut() {
                *x *= a;
            }
        }
    }

    pub fn max_abs(&self, comp: usize) -> f64 {
        self.data.iter().fold(0.0, |m, u| m.max(u[comp].abs()))
    }

    pub fn max_abs_all(&self) -> f64 {
        (0..4).map(|c| self.max_abs(c)).fold(0.0, f64::max)
    }

    /// Weighted `Σ w |u|²` with trapezoid weights in `x1`, uniform in `x2`.
    pub fn norm_sq(&self, grid: &Grid) -> f64 {
        let w1 = grid.weight1();
        let mut s = 0.0;
        for i in 0..self.n1 {
            let mut row = 0.0;
            for j in 0..self.n2 {
                let u = self.at(i, j);
                row += u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3];
            }
            s += w1[i] * row;
        }
        s * grid.dx2()
    }

    pub fn comp_norm_sq(&self, grid: &Grid, comp: usize) -> f64 {
        let w1 = grid.weight1();
        let mut s = 0.0;
        for i in 0..self.n1 {
            let mut row = 0.0;
            for j in 0..self.n2 {
                row += self.at(i, j)[comp].powi(2);
            }
            s += w1[i] * row;
        }
        s * grid.dx2()
    }

    /// Values on the wall `x1 = 0`.
    pub fn trace(&self) -> Vec<[f64; 4]> {
        self.data[..self.n2].to_vec()
    }

    pub fn map(&self, mut f: impl FnMut(usize, usize, &[f64; 4]) -> [f64; 4]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let k = i * self.n2 + j;
                out.data[k] = f(i, j, &self.data[k]);
            }
        }
        out
    }
}

/// Second-order derivatives on the mapped grid.
///
/// Interior nodes use centered differences in `ξ`; the two `x1` ends use
/// second-order one-sided formulas. `x2` is periodic.
pub struct Derivatives<'a> {
    grid: &'a Grid,
}

impl<'a> Derivatives<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        Self { grid }
    }

    #[inline]
    fn xi_first(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let n = self.grid.n1() - 1;
        let h = self.grid.dxi();
        let mut out = [0.0; 4];
        for (c, o) in out.iter_mut().enumerate() {
            *o = if i == 0 {
                (-3.0 * f.at(0, j)[c] + 4.0 * f.at(1, j)[c] - f.at(2, j)[c]) / (2.0 * h)
            } else if i == n {
                (3.0 * f.at(n, j)[c] - 4.0 * f.at(n - 1, j)[c] + f.at(n - 2, j)[c]) / (2.0 * h)
            } else {
                (f.at(i + 1, j)[c] - f.at(i - 1, j)[c]) / (2.0 * h)
            };
        }
        out
    }

    #[inline]
    fn xi_second(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let n = self.grid.n1() - 1;
        let h2 = self.grid.dxi().powi(2);
        let mut out = [0.0; 4];
        for (c, o) in out.iter_mut().enumerate() {
            let u = |k: usize| f.at(k, j)[c];
            *o = if i == 0 {
                (2.0 * u(0) - 5.0 * u(1) + 4.0 * u(2) - u(3)) / h2
            } else if i == n {
                (2.0 * u(n) - 5.0 * u(n - 1) + 4.0 * u(n - 2) - u(n - 3)) / h2
            } else {
                (u(i + 1) - 2.0 * u(i) + u(i - 1)) / h2
            };
        }
        out
    }

    pub fn d1_at(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let g = self.xi_first(f, i, j);
        let jac = self.grid.jac()[i];
        g.map(|v| v / jac)
    }

    pub fn d11_at(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let g = self.xi_first(f, i, j);
        let gg = self.xi_second(f, i, j);
        let jac = self.grid.jac()[i];
        let jx = self.grid.jac_xi()[i];
        let mut out = [0.0; 4];
        for c in 0..4 {
            out[c] = (gg[c] - jx / jac * g[c]) / (jac * jac);
        }
        out
    }

    pub fn d2_at(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let n2 = self.grid.n2();
        let (jp, jm) = ((j + 1) % n2, (j + n2 - 1) % n2);
        let h = self.grid.dx2();
        let (a, b) = (f.at(i, jp), f.at(i, jm));
        [0, 1, 2, 3].map(|c| (a[c] - b[c]) / (2.0 * h))
    }

    pub fn d22_at(&self, f: &StateField, i: usize, j: usize) -> [f64; 4] {
        let n2 = self.grid.n2();
        let (jp, jm) = ((j + 1) % n2, (j + n2 - 1) % n2);
        let h2 = self.grid.dx2().powi(2);
        let (a, m, b) = (f.at(i, jp), f.at(i, j), f.at(i, jm));
        [0, 1, 2, 3].map(|c| (a[c] - 2.0 * m[c] + b[c]) / h2)
    }

    pub fn d1(&self, f: &StateField) -> StateField {
        f.map(|i, j, _| self.d1_at(f, i, j))
    }

    pub fn d2(&self, f: &StateField) -> StateField {
        f.map(|i, j, _| self.d2_at(f, i, j))
    }

    pub fn d11(&self, f: &StateField) -> StateField {
        f.map(|i, j, _| self.d11_at(f, i, j))
    }

    pub fn d22(&self, f: &StateField) -> StateField {
        f.map(|i, j, _| self.d22_at(f, i, j))
    }

    pub fn d12(&self, f: &StateField) -> StateField {
        let g = self.d1(f);
        self.d2(&g)
    }
}

/// Summation-by-parts first derivative in `x1`: centered interior,
/// first-order one-sided closure, norm `weight1`.
#[inline]
pub fn sbp_d1_xi(u: impl Fn(usize) -> f64, i: usize, n: usize, dxi: f64) -> f64 {
    if i == 0 {
        (u(1) - u(0)) / dxi
    } else if i == n {
        (u(n) - u(n - 1)) / dxi
    } else {
        (u(i + 1) - u(i - 1)) / (2.0 * dxi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn test_field(grid: &Grid) -> StateField {
        StateField::from_fn(grid, |x1, x2| {
            let s = (x1 * 1.3).sin() * x2.cos();
            [s, x1 * x1, (x1 + x2).sin(), (-x1).exp()]
        })
    }

    #[test]
    fn derivative_errors_shrink_at_second_order() {
        let tp = 2.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let grid = GridSpec::tanh(1.5, tp, n, n, 1.5).build().unwrap();
            let f = test_field(&grid);
            let d = Derivatives::new(&grid);
            let mut e: f64 = 0.0;
            for i in 0..grid.n1() {
                for j in 0..grid.n2() {
                    let (x1, x2) = (grid.x1()[i], grid.x2()[j]);
                    let d1 = d.d1_at(&f, i, j);
                    let d11 = d.d11_at(&f, i, j);
                    let d2 = d.d2_at(&f, i, j);
                    e = e.max((d1[0] - 1.3 * (1.3 * x1).cos() * x2.cos()).abs());
                    e = e.max((d11[0] + 1.69 * (1.3 * x1).sin() * x2.cos()).abs());
                    e = e.max((d11[1] - 2.0).abs());
                    e = e.max((d2[2] - (x1 + x2).cos()).abs());
                }
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn sbp_identity_holds_on_mapped_grid() {
        let grid = GridSpec::tanh(1.0, 1.0, 20, 4, 2.0).build().unwrap();
        let n = grid.n1() - 1;
        let w = grid.weight1();
        let u: Vec<f64> = grid.x1().iter().map(|x| (3.0 * x).sin() + 0.3).collect();
        let v: Vec<f64> = grid.x1().iter().map(|x| x * x - 0.7).collect();
        let du: Vec<f64> = (0..=n)
            .map(|i| sbp_d1_xi(|k| u[k], i, n, grid.dxi()) / grid.jac()[i])
            .collect();
        let dv: Vec<f64> = (0..=n)
            .map(|i| sbp_d1_xi(|k| v[k], i, n, grid.dxi()) / grid.jac()[i])
            .collect();
        let lhs: f64 = (0..=n).map(|i| w[i] * (u[i] * dv[i] + du[i] * v[i])).sum();
        let rhs = u[n] * v[n] - u[0] * v[0];
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn norms_and_axpy() {
        let grid = GridSpec::uniform(1.0, 1.0, 8, 8).build().unwrap();
        let mut f = StateField::from_fn(&grid, |_, _| [1.0, 0.0, 0.0, 0.0]);
        assert!((f.norm_sq(&grid) - 1.0).abs() < 1e-14);
        let g = f.clone();
        f.axpy(-1.0, &g);
        assert_eq!(f.max_abs_all(), 0.0);
    }
}

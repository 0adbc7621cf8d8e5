//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] carries every partial derivative of total order at most three
//! with respect to `(x1, x2, t)`. Background closures are evaluated on jets,
//! which gives exact coefficient derivatives without finite differencing.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Number of independent variables `(x1, x2, t)`.
pub const NVAR: usize = 3;
/// Highest retained total degree.
pub const DEGREE: usize = 3;
/// Number of monomials of total degree at most [`DEGREE`] in [`NVAR`] variables.
pub const NCOEF: usize = 20;

struct Tables {
    exps: [[usize; NVAR]; NCOEF],
    index: [[[usize; DEGREE + 1]; DEGREE + 1]; DEGREE + 1],
    products: Vec<(usize, usize, usize)>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut exps = [[0; NVAR]; NCOEF];
        let mut index = [[[usize::MAX; DEGREE + 1]; DEGREE + 1]; DEGREE + 1];
        let mut n = 0;
        for deg in 0..=DEGREE {
            for a in (0..=deg).rev() {
                for b in (0..=deg - a).rev() {
                    let c = deg - a - b;
                    exps[n] = [a, b, c];
                    index[a][b][c] = n;
                    n += 1;
                }
            }
        }
        debug_assert_eq!(n, NCOEF);
        let mut products = Vec::new();
        for (p, ep) in exps.iter().enumerate() {
            for (q, eq) in exps.iter().enumerate() {
                let r = [ep[0] + eq[0], ep[1] + eq[1], ep[2] + eq[2]];
                if r[0] + r[1] + r[2] <= DEGREE {
                    products.push((p, q, index[r[0]][r[1]][r[2]]));
                }
            }
        }
        Tables {
            exps,
            index,
            products,
        }
    })
}

/// Taylor coefficients around a point, one slot per monomial `x1^a x2^b t^c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    c: [f64; NCOEF],
}

impl Default for Jet {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = v;
        Self { c }
    }

    /// The independent variable `var` (0 = x1, 1 = x2, 2 = t) at `value`.
    pub fn var(value: f64, var: usize) -> Self {
        assert!(var < NVAR, "jet variable index out of range");
        let mut j = Self::constant(value);
        let mut e = [0; NVAR];
        e[var] = 1;
        j.c[tables().index[e[0]][e[1]][e[2]]] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative `∂x1^a ∂x2^b ∂t^c` at the expansion point.
    pub fn deriv(&self, a: usize, b: usize, c: usize) -> f64 {
        if a + b + c > DEGREE {
            return 0.0;
        }
        let idx = tables().index[a][b][c];
        self.c[idx] * (factorial(a) * factorial(b) * factorial(c)) as f64
    }

    /// First derivative with respect to variable `var`.
    pub fn d(&self, var: usize) -> f64 {
        let mut e = [0; NVAR];
        e[var] = 1;
        self.deriv(e[0], e[1], e[2])
    }

    /// Applies a scalar function given its value and first three derivatives
    /// at the expansion point.
    pub fn compose(&self, f: [f64; 4]) -> Self {
        let mut h = *self;
        h.c[0] = 0.0;
        let h2 = h * h;
        let h3 = h2 * h;
        let mut out = Self::constant(f[0]);
        for m in 1..NCOEF {
            out.c[m] = f[1] * h.c[m] + 0.5 * f[2] * h2.c[m] + f[3] / 6.0 * h3.c[m];
        }
        out
    }

    pub fn recip(&self) -> Self {
        let x = self.c[0];
        self.compose([1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x)])
    }

    pub fn sqrt(&self) -> Self {
        let x = self.c[0];
        let s = x.sqrt();
        self.compose([s, 0.5 / s, -0.25 / (x * s), 0.375 / (x * x * s)])
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose([e, e, e, e])
    }

    pub fn ln(&self) -> Self {
        let x = self.c[0];
        self.compose([x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn tanh(&self) -> Self {
        let th = self.c[0].tanh();
        let s2 = 1.0 - th * th;
        self.compose([th, s2, -2.0 * th * s2, s2 * (6.0 * th * th - 2.0)])
    }

    pub fn powf(&self, p: f64) -> Self {
        let x = self.c[0];
        self.compose([
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        ])
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = Self::constant(1.0);
        for _ in 0..n {
            out = out * *self;
        }
        out
    }

    /// Exact partial derivative as a jet; the top-degree slots become zero.
    pub fn partial(&self, var: usize) -> Self {
        let t = tables();
        let mut out = Self::constant(0.0);
        for (m, e) in t.exps.iter().enumerate() {
            let mut up = *e;
            up[var] += 1;
            if up.iter().sum::<usize>() <= DEGREE {
                out.c[m] = (up[var] as f64) * self.c[t.index[up[0]][up[1]][up[2]]];
            }
        }
        out
    }

    pub fn coefficients(&self) -> &[f64; NCOEF] {
        &self.c
    }

    /// Exponents `(a, b, c)` of monomial slot `m`.
    pub fn exponents(m: usize) -> [usize; NVAR] {
        tables().exps[m]
    }
}

/// A 4×4 matrix of jets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JetMatrix4 {
    pub m: [[Jet; 4]; 4],
}

impl JetMatrix4 {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_f64(a: &nalgebra::Matrix4<f64>) -> Self {
        let mut out = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                out.m[i][j] = Jet::constant(a[(i, j)]);
            }
        }
        out
    }

    pub fn diag(d: [Jet; 4]) -> Self {
        let mut out = Self::zeros();
        for (i, v) in d.into_iter().enumerate() {
            out.m[i][i] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                out.m[j][i] = self.m[i][j];
            }
        }
        out
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e = e.partial(var);
            }
        }
        out
    }

    pub fn scale(&self, s: Jet) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e = *e * s;
            }
        }
        out
    }

    /// `∂x1^a ∂x2^b ∂t^c` of every entry.
    pub fn deriv(&self, a: usize, b: usize, c: usize) -> nalgebra::Matrix4<f64> {
        nalgebra::Matrix4::from_fn(|i, j| self.m[i][j].deriv(a, b, c))
    }

    pub fn value(&self) -> nalgebra::Matrix4<f64> {
        self.deriv(0, 0, 0)
    }
}

impl Add for JetMatrix4 {
    type Output = JetMatrix4;
    fn add(mut self, rhs: JetMatrix4) -> JetMatrix4 {
        for i in 0..4 {
            for j in 0..4 {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl Sub for JetMatrix4 {
    type Output = JetMatrix4;
    fn sub(mut self, rhs: JetMatrix4) -> JetMatrix4 {
        for i in 0..4 {
            for j in 0..4 {
                self.m[i][j] = self.m[i][j] - rhs.m[i][j];
            }
        }
        self
    }
}

impl Mul for JetMatrix4 {
    type Output = JetMatrix4;
    fn mul(self, rhs: JetMatrix4) -> JetMatrix4 {
        let mut out = Self::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.m[i][k];
                if a.c.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for j in 0..4 {
                    out.m[i][j] += a * rhs.m[k][j];
                }
            }
        }
        out
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product::<usize>().max(1)
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self = *self + rhs;
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; NCOEF];
        for &(p, q, r) in &tables().products {
            c[r] += self.c[p] * rhs.c[q];
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in self.c.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        rhs.recip() * self
    }
}

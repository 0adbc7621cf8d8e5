//! Background state, equation of state and the coefficient matrices of the
//! symmetric linearized system.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jet::{Jet, JetMatrix4};

/// Pressure law `p = p_e(ρ) + θ p_θ(ρ)` with specific heat `c_v(θ) = cv0 + cv1 θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquationOfState {
    /// `p = R ρ θ`.
    IdealGas { gas_constant: f64, cv0: f64, cv1: f64 },
    /// `p = k ρ^γ`, no thermal pressure.
    Isentropic { k: f64, gamma: f64, cv0: f64, cv1: f64 },
}

impl Default for EquationOfState {
    fn default() -> Self {
        Self::ideal()
    }
}

impl EquationOfState {
    /// `p = ρθ`, `c_v = 1`.
    pub fn ideal() -> Self {
        Self::IdealGas {
            gas_constant: 1.0,
            cv0: 1.0,
            cv1: 0.0,
        }
    }

    pub fn isentropic(k: f64, gamma: f64) -> Self {
        Self::Isentropic {
            k,
            gamma,
            cv0: 1.0,
            cv1: 0.0,
        }
    }

    /// Builds an equation of state from a config name and parameter list.
    ///
    /// `ideal`: `[R, cv0, cv1]`, `isentropic`: `[k, γ, cv0, cv1]`; trailing
    /// parameters default to `R = k = γ = cv0 = 1`, `cv1 = 0`.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
        let eos = match name {
            "ideal" | "ideal_gas" => Self::IdealGas {
                gas_constant: p(0, 1.0),
                cv0: p(1, 1.0),
                cv1: p(2, 0.0),
            },
            "isentropic" => Self::Isentropic {
                k: p(0, 1.0),
                gamma: p(1, 1.0),
                cv0: p(2, 1.0),
                cv1: p(3, 0.0),
            },
            other => return Err(Error::InvalidEos(format!("unknown equation of state '{other}'"))),
        };
        eos.validate()?;
        Ok(eos)
    }

    pub fn validate(&self) -> Result<()> {
        let (cv0, cv1) = self.cv_law();
        if !(cv0 > 0.0) || !(cv1 >= 0.0) {
            return Err(Error::InvalidEos(format!(
                "c_v = {cv0} + {cv1} θ must be positive for θ > 0"
            )));
        }
        match *self {
            Self::IdealGas { gas_constant, .. } if !(gas_constant > 0.0) => Err(Error::InvalidEos(
                format!("gas constant {gas_constant} must be positive"),
            )),
            Self::Isentropic { k, gamma, .. } if !(k > 0.0) || !(gamma >= 1.0) => Err(
                Error::InvalidEos(format!("isentropic law needs k > 0 and γ ≥ 1, got {k}, {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    fn cv_law(&self) -> (f64, f64) {
        match *self {
            Self::IdealGas { cv0, cv1, .. } | Self::Isentropic { cv0, cv1, .. } => (cv0, cv1),
        }
    }

    /// Lower bound of `c_v` on `θ > 0`.
    pub fn cv_min(&self) -> f64 {
        self.cv_law().0
    }

    pub fn p_e(&self, rho: &Jet) -> Jet {
        match *self {
            Self::IdealGas { .. } => Jet::constant(0.0),
            Self::Isentropic { k, gamma, .. } => rho.powf(gamma) * k,
        }
    }

    pub fn p_theta(&self, rho: &Jet) -> Jet {
        match *self {
            Self::IdealGas { gas_constant, .. } => *rho * gas_constant,
            Self::Isentropic { .. } => Jet::constant(0.0),
        }
    }

    /// `∂p/∂ρ = p_e'(ρ) + θ p_θ'(ρ)`, supplied analytically.
    pub fn p_rho(&self, rho: &Jet, theta: &Jet) -> Jet {
        match *self {
            Self::IdealGas { gas_constant, .. } => *theta * gas_constant,
            Self::Isentropic { k, gamma, .. } => rho.powf(gamma - 1.0) * (k * gamma),
        }
    }

    pub fn pressure(&self, rho: &Jet, theta: &Jet) -> Jet {
        self.p_e(rho) + *theta * self.p_theta(rho)
    }

    pub fn c_v(&self, theta: &Jet) -> Jet {
        let (c0, c1) = self.cv_law();
        *theta * c1 + c0
    }

    /// Internal energy `Q(θ) = ∫₀^θ c_v`.
    pub fn q_energy(&self, theta: &Jet) -> Jet {
        let (c0, c1) = self.cv_law();
        *theta * c0 + *theta * *theta * (0.5 * c1)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::IdealGas { .. } => "ideal",
            Self::Isentropic { .. } => "isentropic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    Constant,
    Analytic,
}

/// Closure returning `(ρ', u'_1, u'_2, θ')` at a jet point `(x1, x2, t)`.
pub type FieldFn = Arc<dyn Fn(&Jet, &Jet, &Jet) -> [Jet; 4] + Send + Sync>;

/// The base state `V'` the system is linearized around.
#[derive(Clone)]
pub struct BackgroundState {
    pub kind: BackgroundKind,
    pub eos: EquationOfState,
    pub name: String,
    /// Whether the inviscid equations hold exactly (residuals then ignore viscosity).
    pub inviscid_exact: bool,
    /// Physical transport coefficients `(μ, λ, κ)` used by the residual diagnostic.
    pub transport: [f64; 3],
    /// Whether the closures depend on `t`; time-independent coefficients are cached.
    pub time_dependent: bool,
    fields: FieldFn,
    constant: Option<[f64; 4]>,
}

impl fmt::Debug for BackgroundState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackgroundState")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("eos", &self.eos)
            .field("constant", &self.constant)
            .finish()
    }
}

impl BackgroundState {
    /// A constant state; the velocity must vanish.
    pub fn constant(rho: f64, u1: f64, u2: f64, theta: f64, eos: EquationOfState) -> Result<Self> {
        eos.validate()?;
        if u1 != 0.0 || u2 != 0.0 {
            return Err(Error::UnsupportedBackground(
                "constant backgrounds must be at rest".into(),
            ));
        }
        if !(rho > 0.0) || !(theta > 0.0) {
            return Err(Error::NonPositiveState {
                x1: 0.0,
                x2: 0.0,
                t: 0.0,
                rho,
                theta,
            });
        }
        let v = [rho, u1, u2, theta];
        Ok(Self {
            kind: BackgroundKind::Constant,
            eos,
            name: "constant".into(),
            inviscid_exact: true,
            transport: [0.0; 3],
            time_dependent: false,
            fields: Arc::new(move |_, _, _| v.map(Jet::constant)),
            constant: Some(v),
        })
    }

    /// The constant ideal gas at rest with `ρ' = θ' = 1`.
    pub fn ideal_at_rest() -> Self {
        Self::constant(1.0, 0.0, 0.0, 1.0, EquationOfState::ideal()).expect("valid constant state")
    }

    /// A user-supplied analytic state.
    pub fn analytic(
        name: impl Into<String>,
        eos: EquationOfState,
        inviscid_exact: bool,
        time_dependent: bool,
        fields: FieldFn,
    ) -> Result<Self> {
        eos.validate()?;
        Ok(Self {
            kind: BackgroundKind::Analytic,
            eos,
            name: name.into(),
            inviscid_exact,
            transport: [0.0; 3],
            time_dependent,
            fields,
            constant: None,
        })
    }

    /// Named backgrounds available from the run config.
    ///
    /// * `constant`: `[ρ, u1, u2, θ]`
    /// * `density_wave`: `[ρ0, a, k, θ0]`, `ρ = ρ0(1 + a sin k x2)`, `θ = θ0`
    /// * `isobaric_wave`: `[ρ0, a, k, θ0]`, `ρ = ρ0(1 + a sin k x2)`, `θ = θ0 / (1 + a sin k x2)`
    /// * `wall_heated`: `[ρ0, θ0, a, λ]`, `θ = θ0(1 + a e^{-λ x1})`, `ρ = ρ0 / (1 + a e^{-λ x1})`
    pub fn from_name(name: &str, params: &[f64], eos: EquationOfState) -> Result<Self> {
        let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
        match name {
            "constant" => Self::constant(p(0, 1.0), p(1, 0.0), p(2, 0.0), p(3, 1.0), eos),
            "density_wave" => {
                let (rho0, a, k, theta0) = (p(0, 1.0), p(1, 0.1), p(2, 1.0), p(3, 1.0));
                Self::analytic(
                    name,
                    eos,
                    true,
                    false,
                    Arc::new(move |_x1, x2, _t| {
                        let rho = ((*x2 * k).sin() * a + 1.0) * rho0;
                        [rho, Jet::constant(0.0), Jet::constant(0.0), Jet::constant(theta0)]
                    }),
                )
            }
            "isobaric_wave" => {
                let (rho0, a, k, theta0) = (p(0, 1.0), p(1, 0.1), p(2, 1.0), p(3, 1.0));
                Self::analytic(
                    name,
                    eos,
                    true,
                    false,
                    Arc::new(move |_x1, x2, _t| {
                        let s = (*x2 * k).sin() * a + 1.0;
                        [s * rho0, Jet::constant(0.0), Jet::constant(0.0), theta0 / s]
                    }),
                )
            }
            "wall_heated" => {
                let (rho0, theta0, a, lam) = (p(0, 1.0), p(1, 1.0), p(2, 0.2), p(3, 1.0));
                Self::analytic(
                    name,
                    eos,
                    true,
                    false,
                    Arc::new(move |x1, _x2, _t| {
                        let s = (*x1 * (-lam)).exp() * a + 1.0;
                        [rho0 / s, Jet::constant(0.0), Jet::constant(0.0), s * theta0]
                    }),
                )
            }
            other => Err(Error::UnsupportedBackground(format!("unknown background '{other}'"))),
        }
    }

    pub fn with_transport(mut self, mu: f64, lambda: f64, kappa: f64) -> Self {
        self.transport = [mu, lambda, kappa];
        self
    }

    pub fn constant_state(&self) -> Option<[f64; 4]> {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.kind == BackgroundKind::Constant
    }

    /// Primitive fields as jets around `(x1, x2, t)`.
    pub fn primitive_jets(&self, x1: f64, x2: f64, t: f64) -> [Jet; 4] {
        (self.fields)(&Jet::var(x1, 0), &Jet::var(x2, 1), &Jet::var(t, 2))
    }

    /// All derived background quantities as jets around `(x1, x2, t)`.
    pub fn jets(&self, x1: f64, x2: f64, t: f64) -> Result<BackgroundJets> {
        let [rho, u1, u2, theta] = self.primitive_jets(x1, x2, t);
        if !(rho.value() > 0.0) || !(theta.value() > 0.0) {
            return Err(Error::NonPositiveState {
                x1,
                x2,
                t,
                rho: rho.value(),
                theta: theta.value(),
            });
        }
        let p_rho = self.eos.p_rho(&rho, &theta);
        if !(p_rho.value() > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "p_rho",
                value: p_rho.value(),
            });
        }
        let p_theta = self.eos.p_theta(&rho);
        let cv = self.eos.c_v(&theta);
        let beta = rho * cv / (theta * p_rho);
        Ok(BackgroundJets {
            rho,
            u1,
            u2,
            theta,
            p_rho,
            p_theta,
            beta,
        })
    }

    /// `α(x2, t) = p'_θ / p'_ρ` on the wall, as a jet in `(x2, t)` only.
    pub fn alpha_jet(&self, x2: f64, t: f64) -> Result<Jet> {
        let x1 = Jet::constant(0.0);
        let [rho, _, _, theta] = (self.fields)(&x1, &Jet::var(x2, 1), &Jet::var(t, 2));
        if !(rho.value() > 0.0) || !(theta.value() > 0.0) {
            return Err(Error::NonPositiveState {
                x1: 0.0,
                x2,
                t,
                rho: rho.value(),
                theta: theta.value(),
            });
        }
        Ok(self.eos.p_theta(&rho) / self.eos.p_rho(&rho, &theta))
    }

    pub fn alpha(&self, x2: f64, t: f64) -> Result<f64> {
        Ok(self.alpha_jet(x2, t)?.value())
    }
}

/// Background quantities at a point, with derivatives.
#[derive(Clone, Copy, Debug)]
pub struct BackgroundJets {
    pub rho: Jet,
    pub u1: Jet,
    pub u2: Jet,
    pub theta: Jet,
    pub p_rho: Jet,
    pub p_theta: Jet,
    pub beta: Jet,
}

impl BackgroundJets {
    pub fn a0(&self) -> JetMatrix4 {
        let r = self.rho / self.p_rho;
        JetMatrix4::diag([self.rho.recip(), r, r, self.beta])
    }

    fn advective(&self, u: Jet, dir: usize) -> JetMatrix4 {
        let mut m = JetMatrix4::zeros();
        let r = self.rho / self.p_rho;
        m.m[0][0] = u / self.rho;
        m.m[1][1] = r * u;
        m.m[2][2] = r * u;
        m.m[3][3] = self.beta * u;
        let k = self.p_theta / self.p_rho;
        let v = dir + 1;
        m.m[0][v] = Jet::constant(1.0);
        m.m[v][0] = Jet::constant(1.0);
        m.m[v][3] = k;
        m.m[3][v] = k;
        m
    }

    pub fn a1(&self) -> JetMatrix4 {
        self.advective(self.u1, 0)
    }

    pub fn a2(&self) -> JetMatrix4 {
        self.advective(self.u2, 1)
    }

    /// Diagonal of the Laplacian block, `(0, μ̄/p'_ρ, μ̄/p'_ρ, κ̄/(θ'p'_ρ))`.
    pub fn dvisc(&self, s: &ViscosityScaling) -> [Jet; 4] {
        let m = self.p_rho.recip() * s.mu_bar;
        [Jet::constant(0.0), m, m, (self.theta * self.p_rho).recip() * s.kappa_bar]
    }

    /// Second-order viscous blocks `K_11, K_12 (= K_21), K_22` so that the
    /// dissipation reads `Σ_ij K_ij ∂_i ∂_j V`.
    pub fn viscous_blocks(&self, s: &ViscosityScaling) -> [JetMatrix4; 3] {
        let d = self.dvisc(s);
        let xi = self.p_rho.recip() * s.xi_bar();
        let mut k11 = JetMatrix4::diag(d);
        let mut k22 = JetMatrix4::diag(d);
        let mut k12 = JetMatrix4::zeros();
        k11.m[1][1] += xi;
        k22.m[2][2] += xi;
        k12.m[1][2] = xi * 0.5;
        k12.m[2][1] = xi * 0.5;
        [k11, k12, k22]
    }

    /// Dissipation coupling matrices `I_1, I_2` (row θ) from the linearized
    /// viscous heating `(2μ̄/θ'p'_ρ)(∂_i u'_j + ∂_j u'_i)∂_i v_j + (2λ̄/θ'p'_ρ) div u' div v`.
    pub fn coupling(&self, s: &ViscosityScaling) -> [JetMatrix4; 2] {
        let w = (self.theta * self.p_rho).recip();
        let d11 = self.u1.partial(0);
        let d22 = self.u2.partial(1);
        let shear = self.u2.partial(0) + self.u1.partial(1);
        let div = d11 + d22;
        let mut i1 = JetMatrix4::zeros();
        let mut i2 = JetMatrix4::zeros();
        i1.m[3][1] = w * (d11 * (4.0 * s.mu_bar) + div * (2.0 * s.lambda_bar));
        i1.m[3][2] = w * shear * (2.0 * s.mu_bar);
        i2.m[3][1] = w * shear * (2.0 * s.mu_bar);
        i2.m[3][2] = w * (d22 * (4.0 * s.mu_bar) + div * (2.0 * s.lambda_bar));
        [i1, i2]
    }
}

/// Point samples of the background and its derived quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundValues {
    pub rho_p: f64,
    pub u1_p: f64,
    pub u2_p: f64,
    pub theta_p: f64,
    pub p_rho: f64,
    pub p_theta: f64,
    pub beta_p: f64,
    /// `grad_u[i][j] = ∂_{x_{j+1}} u'_{i+1}`.
    pub grad_u: [[f64; 2]; 2],
}

impl BackgroundValues {
    pub fn from_jets(j: &BackgroundJets) -> Self {
        Self {
            rho_p: j.rho.value(),
            u1_p: j.u1.value(),
            u2_p: j.u2.value(),
            theta_p: j.theta.value(),
            p_rho: j.p_rho.value(),
            p_theta: j.p_theta.value(),
            beta_p: j.beta.value(),
            grad_u: [[j.u1.d(0), j.u1.d(1)], [j.u2.d(0), j.u2.d(1)]],
        }
    }

    /// Largest acoustic speed `|u'| + √(p'_ρ)`.
    pub fn sound_bound(&self) -> f64 {
        (self.u1_p * self.u1_p + self.u2_p * self.u2_p).sqrt() + self.p_rho.sqrt()
    }
}

/// Viscosity scaling `μ = μ̄ε²`, `ξ = (μ̄ + λ̄)ε²`, `κ = κ̄ε²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityScaling {
    pub mu_bar: f64,
    pub lambda_bar: f64,
    pub kappa_bar: f64,
    pub epsilon: f64,
}

impl Default for ViscosityScaling {
    fn default() -> Self {
        Self {
            mu_bar: 1.0,
            lambda_bar: 0.0,
            kappa_bar: 1.0,
            epsilon: 0.1,
        }
    }
}

impl ViscosityScaling {
    pub fn new(mu_bar: f64, lambda_bar: f64, kappa_bar: f64, epsilon: f64) -> Result<Self> {
        let s = Self {
            mu_bar,
            lambda_bar,
            kappa_bar,
            epsilon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_bar > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "mu_bar",
                value: self.mu_bar,
            });
        }
        if !(self.xi_bar() >= 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "xi_bar",
                value: self.xi_bar(),
            });
        }
        if !(self.kappa_bar > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "kappa_bar",
                value: self.kappa_bar,
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                name: "epsilon",
                value: self.epsilon,
            });
        }
        Ok(())
    }

    pub fn xi_bar(&self) -> f64 {
        self.mu_bar + self.lambda_bar
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// Coefficient matrices of the symmetric system at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientMatrices {
    pub a0: Matrix4<f64>,
    pub a1: Matrix4<f64>,
    pub a2: Matrix4<f64>,
    pub a1m: Matrix4<f64>,
    pub a1r: Matrix4<f64>,
    pub i1: Matrix4<f64>,
    pub i2: Matrix4<f64>,
    pub alpha: f64,
}

/// The frozen boundary part of `A_1`: unit ρ–v₁ coupling and `α` in the v₁–θ slots.
pub fn a1m_matrix(alpha: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = 1.0;
    m[(1, 0)] = 1.0;
    m[(1, 3)] = alpha;
    m[(3, 1)] = alpha;
    m
}

pub fn eval_background(bg: &BackgroundState, x1: f64, x2: f64, t: f64) -> Result<BackgroundValues> {
    Ok(BackgroundValues::from_jets(&bg.jets(x1, x2, t)?))
}

pub fn assemble_matrices(
    bv: &BackgroundValues,
    alpha: f64,
    scaling: &ViscosityScaling,
) -> CoefficientMatrices {
    let r = bv.rho_p / bv.p_rho;
    let k = bv.p_theta / bv.p_rho;
    let a0 = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0 / bv.rho_p, r, r, bv.beta_p));
    let advective = |u: f64, v: usize| {
        let mut m = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            u / bv.rho_p,
            r * u,
            r * u,
            bv.beta_p * u,
        ));
        m[(0, v)] = 1.0;
        m[(v, 0)] = 1.0;
        m[(v, 3)] = k;
        m[(3, v)] = k;
        m
    };
    let a1 = advective(bv.u1_p, 1);
    let a2 = advective(bv.u2_p, 2);
    let a1m = a1m_matrix(alpha);
    let w = 1.0 / (bv.theta_p * bv.p_rho);
    let g = bv.grad_u;
    let div = g[0][0] + g[1][1];
    let shear = g[1][0] + g[0][1];
    let mut i1 = Matrix4::zeros();
    let mut i2 = Matrix4::zeros();
    i1[(3, 1)] = w * (4.0 * scaling.mu_bar * g[0][0] + 2.0 * scaling.lambda_bar * div);
    i1[(3, 2)] = w * 2.0 * scaling.mu_bar * shear;
    i2[(3, 1)] = w * 2.0 * scaling.mu_bar * shear;
    i2[(3, 2)] = w * (4.0 * scaling.mu_bar * g[1][1] + 2.0 * scaling.lambda_bar * div);
    CoefficientMatrices {
        a0,
        a1,
        a2,
        a1m,
        a1r: a1 - a1m,
        i1,
        i2,
        alpha,
    }
}

/// Per-equation maximum residuals of the nonlinear system evaluated on the background.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NsfResidual {
    pub continuity: f64,
    pub momentum: f64,
    pub energy: f64,
}

impl NsfResidual {
    pub fn max(&self) -> f64 {
        self.continuity.max(self.momentum).max(self.energy)
    }
}

/// Residual of the background in the full equations, sampled on the grid
/// nodes at time `t`; derivatives come from the analytic closures.
pub fn nsf_background_residual(bg: &BackgroundState, grid: &Grid, t: f64) -> Result<NsfResidual> {
    if bg.is_constant() {
        return Ok(NsfResidual::default());
    }
    let [mu, lambda, kappa] = if bg.inviscid_exact {
        [0.0; 3]
    } else {
        bg.transport
    };
    let mut out = NsfResidual::default();
    for &x1 in grid.x1() {
        for &x2 in grid.x2() {
            let [rho, u1, u2, theta] = bg.primitive_jets(x1, x2, t);
            let p = bg.eos.pressure(&rho, &theta);
            let q = bg.eos.q_energy(&theta);
            let u = [u1, u2];
            let d = |f: &Jet, v: usize| f.d(v);
            let dd = |f: &Jet, a: usize, b: usize| {
                let mut e = [0usize; 3];
                e[a] += 1;
                e[b] += 1;
                f.deriv(e[0], e[1], e[2])
            };
            let cont = d(&rho, 2)
                + (rho * u1).d(0)
                + (rho * u2).d(1);
            out.continuity = out.continuity.max(cont.abs());
            let div_u = d(&u1, 0) + d(&u2, 1);
            let grad_div = [dd(&u1, 0, 0) + dd(&u2, 1, 0), dd(&u1, 0, 1) + dd(&u2, 1, 1)];
            let r0 = rho.value();
            for i in 0..2 {
                let mut r = r0 * (d(&u[i], 2) + u1.value() * d(&u[i], 0) + u2.value() * d(&u[i], 1))
                    + p.d(i);
                let lap = dd(&u[i], 0, 0) + dd(&u[i], 1, 1);
                r -= mu * lap + (mu + lambda) * grad_div[i];
                out.momentum = out.momentum.max(r.abs());
            }
            let p_theta = bg.eos.p_theta(&rho);
            let mut e = r0 * (q.d(2) + u1.value() * q.d(0) + u2.value() * q.d(1))
                + theta.value() * p_theta.value() * div_u;
            let mut diss = lambda * div_u * div_u;
            for i in 0..2 {
                for j in 0..2 {
                    let s = d(&u[i], j) + d(&u[j], i);
                    diss += 0.5 * mu * s * s;
                }
            }
            e -= diss + kappa * (dd(&theta, 0, 0) + dd(&theta, 1, 1));
            out.energy = out.energy.max(e.abs());
        }
    }
    Ok(out)
}

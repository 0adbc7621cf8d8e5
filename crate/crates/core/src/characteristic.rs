//! Boundary eigenframe, characteristic variables and the transformed
//! coefficients of the system written for `U = QV`.

use nalgebra::{Matrix4, RowVector4, SMatrix};

use crate::error::Result;
use crate::jet::{Jet, JetMatrix4};
use crate::model::{a1m_matrix, BackgroundState, BackgroundValues, CoefficientMatrices, ViscosityScaling};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Orthonormal eigenvectors of `A_1m` stacked as the rows of `Q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFrame {
    pub alpha: f64,
    pub eigenvalues: [f64; 4],
    pub q: Matrix4<f64>,
}

pub fn eigen_frame(alpha: f64) -> BoundaryFrame {
    let s = (alpha * alpha + 1.0).sqrt();
    let r = (2.0 * (alpha * alpha + 1.0)).sqrt();
    #[rustfmt::skip]
    let q = Matrix4::new(
        0.0,       0.0,          1.0, 0.0,
        alpha / s, 0.0,          0.0, -1.0 / s,
        1.0 / r,   1.0 / SQRT2,  0.0, alpha / r,
        1.0 / r,   -1.0 / SQRT2, 0.0, alpha / r,
    );
    BoundaryFrame {
        alpha,
        eigenvalues: [0.0, 0.0, s, -s],
        q,
    }
}

/// `Q` built from an `α` jet, so that derivatives of `Q` come for free.
pub fn q_jet(alpha: &Jet) -> JetMatrix4 {
    let s2 = *alpha * *alpha + 1.0;
    let inv_s = s2.sqrt().recip();
    let inv_r = inv_s * (1.0 / SQRT2);
    let z = Jet::constant(0.0);
    let one = Jet::constant(1.0);
    let h = Jet::constant(1.0 / SQRT2);
    JetMatrix4 {
        m: [
            [z, z, one, z],
            [*alpha * inv_s, z, z, -inv_s],
            [inv_r, h, z, *alpha * inv_r],
            [inv_r, -h, z, *alpha * inv_r],
        ],
    }
}

impl BoundaryFrame {
    pub fn to_characteristic(&self, v: &[f64; 4]) -> [f64; 4] {
        mat_vec(&self.q, v)
    }

    pub fn from_characteristic(&self, u: &[f64; 4]) -> [f64; 4] {
        mat_vec(&self.q.transpose(), u)
    }

    pub fn sound_speed(&self) -> f64 {
        self.eigenvalues[2]
    }
}

pub fn to_characteristic(frame: &BoundaryFrame, v: &[f64; 4]) -> [f64; 4] {
    frame.to_characteristic(v)
}

pub fn from_characteristic(frame: &BoundaryFrame, u: &[f64; 4]) -> [f64; 4] {
    frame.from_characteristic(u)
}

#[inline]
pub fn mat_vec(m: &Matrix4<f64>, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[(r, 0)] * v[0] + m[(r, 1)] * v[1] + m[(r, 2)] * v[2] + m[(r, 3)] * v[3];
    }
    out
}

/// The constant `𝒢^{11}`, `𝒢^{22}`, `𝒢^{12}` of the transformed viscous block.
pub fn g11() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(2, 2)] = 0.5;
    m[(3, 3)] = 0.5;
    m[(2, 3)] = -0.5;
    m[(3, 2)] = -0.5;
    m
}

pub fn g22() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = 1.0;
    m
}

pub fn g12() -> Matrix4<f64> {
    let c = SQRT2 / 4.0;
    let mut m = Matrix4::zeros();
    m[(0, 2)] = c;
    m[(2, 0)] = c;
    m[(0, 3)] = -c;
    m[(3, 0)] = -c;
    m
}

/// Transformed coefficients at one point.
///
/// The viscous part reads `𝒢Δ + ξ̄' Σ 𝒢^{ij} ∂_ij` with `ξ̄' = ξ̄ / p'_ρ`,
/// equivalently `K11 ∂11 + 2 K12 ∂12 + K22 ∂22`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformedCoefficients {
    pub cal_a0: Matrix4<f64>,
    pub cal_a1m: Matrix4<f64>,
    pub cal_a1r: Matrix4<f64>,
    pub cal_a2: Matrix4<f64>,
    pub cal_w: Matrix4<f64>,
    pub cal_p1: Matrix4<f64>,
    pub cal_p2: Matrix4<f64>,
    pub cal_i1: Matrix4<f64>,
    pub cal_i2: Matrix4<f64>,
    pub cal_q1: Matrix4<f64>,
    pub cal_q2: Matrix4<f64>,
    pub cal_g: Matrix4<f64>,
    pub cal_g11: Matrix4<f64>,
    pub cal_g22: Matrix4<f64>,
    pub cal_g12: Matrix4<f64>,
    /// `ξ̄ / p'_ρ`.
    pub xi_ratio: f64,
    /// `(η0, η1, η2, η3)`: entries (1,1), (1,2), (2,2), (2,3) of `𝒜0`.
    pub eta: [f64; 4],
    /// `(τ0, τ1, τ2, τ3)`: entries (1,1), (1,2), (2,2), (2,3) of `𝒢 + ξ̄'𝒢^{11}`.
    pub tau: [f64; 4],
    pub alpha: f64,
}

impl TransformedCoefficients {
    pub fn k11(&self) -> Matrix4<f64> {
        self.cal_g + self.cal_g11 * self.xi_ratio
    }

    pub fn k12(&self) -> Matrix4<f64> {
        self.cal_g12 * self.xi_ratio
    }

    pub fn k22(&self) -> Matrix4<f64> {
        self.cal_g + self.cal_g22 * self.xi_ratio
    }

    pub fn cal_a1(&self) -> Matrix4<f64> {
        self.cal_a1m + self.cal_a1r
    }

    fn fill_named(&mut self) {
        let a = &self.cal_a0;
        self.eta = [a[(1, 1)], a[(1, 2)], a[(2, 2)], a[(2, 3)]];
        let k = self.k11();
        self.tau = [k[(1, 1)], k[(1, 2)], k[(2, 2)], k[(2, 3)]];
    }
}

/// Spatial and temporal derivatives of `Q` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameDerivatives {
    pub dq_dx2: Matrix4<f64>,
    pub dq_dt: Matrix4<f64>,
    pub d2q_dx2: Matrix4<f64>,
}

impl FrameDerivatives {
    pub fn zero() -> Self {
        Self {
            dq_dx2: Matrix4::zeros(),
            dq_dt: Matrix4::zeros(),
            d2q_dx2: Matrix4::zeros(),
        }
    }

    /// Derivatives of `Q(α(x2, t))` from the first two `x2` derivatives and
    /// the time derivative of `α`.
    pub fn from_alpha(alpha: f64, d_alpha_dx2: f64, d2_alpha_dx2: f64, d_alpha_dt: f64) -> Self {
        let mut a = Jet::constant(alpha);
        // Encode α as a local polynomial in (x2, t) around the point.
        let x2 = Jet::var(0.0, 1);
        let t = Jet::var(0.0, 2);
        a = a + x2 * d_alpha_dx2 + x2 * x2 * (0.5 * d2_alpha_dx2) + t * d_alpha_dt;
        let q = q_jet(&a);
        Self {
            dq_dx2: q.deriv(0, 1, 0),
            dq_dt: q.deriv(0, 0, 1),
            d2q_dx2: q.deriv(0, 2, 0),
        }
    }
}

/// Pointwise assembly from plain matrices, frame derivatives and the scaling.
///
/// `A_1` is split against `A_1m(α)`; `∂_1 Q = 0` because `α` lives on the wall.
pub fn transformed_coeffs(
    frame: &BoundaryFrame,
    m: &CoefficientMatrices,
    fd: &FrameDerivatives,
    bv: &BackgroundValues,
    scaling: &ViscosityScaling,
) -> TransformedCoefficients {
    let q = frame.q;
    let qt = q.transpose();
    let conj = |a: &Matrix4<f64>| q * a * qt;
    let dvisc = Matrix4::from_diagonal(&nalgebra::Vector4::new(
        0.0,
        scaling.mu_bar / bv.p_rho,
        scaling.mu_bar / bv.p_rho,
        scaling.kappa_bar / (bv.theta_p * bv.p_rho),
    ));
    let xi_ratio = scaling.xi_bar() / bv.p_rho;
    let mut k11 = dvisc;
    let mut k22 = dvisc;
    let mut k12 = Matrix4::zeros();
    k11[(1, 1)] += xi_ratio;
    k22[(2, 2)] += xi_ratio;
    k12[(1, 2)] = 0.5 * xi_ratio;
    k12[(2, 1)] = 0.5 * xi_ratio;
    let dqt2 = fd.dq_dx2.transpose();
    let dqtt = fd.dq_dt.transpose();
    let d2qt = fd.d2q_dx2.transpose();
    let mut tc = TransformedCoefficients {
        cal_a0: conj(&m.a0),
        cal_a1m: conj(&a1m_matrix(frame.alpha)),
        cal_a1r: conj(&m.a1r),
        cal_a2: conj(&m.a2),
        cal_w: q * m.a0 * dqtt + q * m.a2 * dqt2,
        cal_p1: q * (k12 * 2.0) * dqt2,
        cal_p2: q * (k22 * 2.0) * dqt2,
        cal_i1: conj(&m.i1),
        cal_i2: conj(&m.i2),
        cal_q1: q * k22 * d2qt,
        cal_q2: q * m.i2 * dqt2,
        cal_g: conj(&dvisc),
        cal_g11: g11(),
        cal_g22: g22(),
        cal_g12: g12(),
        xi_ratio,
        eta: [0.0; 4],
        tau: [0.0; 4],
        alpha: frame.alpha,
    };
    tc.fill_named();
    tc
}

/// Transformed coefficients as jets around a point, used for `x1` Taylor
/// coefficients on the wall.
#[derive(Clone, Copy, Debug)]
pub struct TransformedJets {
    pub alpha: f64,
    pub cal_a0: JetMatrix4,
    pub cal_a1: JetMatrix4,
    pub cal_a2: JetMatrix4,
    pub cal_w: JetMatrix4,
    pub cal_p1: JetMatrix4,
    pub cal_p2: JetMatrix4,
    pub cal_i1: JetMatrix4,
    pub cal_i2: JetMatrix4,
    pub cal_q1: JetMatrix4,
    pub cal_q2: JetMatrix4,
    pub cal_g: JetMatrix4,
    pub cal_k11: JetMatrix4,
    pub cal_k12: JetMatrix4,
    pub cal_k22: JetMatrix4,
    pub xi_ratio: Jet,
}

impl TransformedJets {
    pub fn at(
        bg: &BackgroundState,
        scaling: &ViscosityScaling,
        x1: f64,
        x2: f64,
        t: f64,
    ) -> Result<Self> {
        let bj = bg.jets(x1, x2, t)?;
        let alpha = bg.alpha_jet(x2, t)?;
        let q = q_jet(&alpha);
        let qt = q.transpose();
        let conj = |a: &JetMatrix4| q * *a * qt;
        let [k11, k12, k22] = bj.viscous_blocks(scaling);
        let [i1, i2] = bj.coupling(scaling);
        let a0 = bj.a0();
        let a2 = bj.a2();
        let dqt2 = qt.partial(1);
        let dqtt = qt.partial(2);
        let d2qt = dqt2.partial(1);
        let two = Jet::constant(2.0);
        Ok(Self {
            alpha: alpha.value(),
            cal_a0: conj(&a0),
            cal_a1: conj(&bj.a1()),
            cal_a2: conj(&a2),
            cal_w: q * a0 * dqtt + q * a2 * dqt2,
            cal_p1: q * k12.scale(two) * dqt2,
            cal_p2: q * k22.scale(two) * dqt2,
            cal_i1: conj(&i1),
            cal_i2: conj(&i2),
            cal_q1: q * k22 * d2qt,
            cal_q2: q * i2 * dqt2,
            cal_g: conj(&JetMatrix4::diag(bj.dvisc(scaling))),
            cal_k11: conj(&k11),
            cal_k12: conj(&k12),
            cal_k22: conj(&k22),
            xi_ratio: bj.p_rho.recip() * scaling.xi_bar(),
        })
    }

    pub fn values(&self) -> TransformedCoefficients {
        let a1 = self.cal_a1.value();
        let a1m = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            0.0,
            0.0,
            (self.alpha * self.alpha + 1.0).sqrt(),
            -(self.alpha * self.alpha + 1.0).sqrt(),
        ));
        let mut tc = TransformedCoefficients {
            cal_a0: self.cal_a0.value(),
            cal_a1m: a1m,
            cal_a1r: a1 - a1m,
            cal_a2: self.cal_a2.value(),
            cal_w: self.cal_w.value(),
            cal_p1: self.cal_p1.value(),
            cal_p2: self.cal_p2.value(),
            cal_i1: self.cal_i1.value(),
            cal_i2: self.cal_i2.value(),
            cal_q1: self.cal_q1.value(),
            cal_q2: self.cal_q2.value(),
            cal_g: self.cal_g.value(),
            cal_g11: g11(),
            cal_g22: g22(),
            cal_g12: g12(),
            xi_ratio: self.xi_ratio.value(),
            eta: [0.0; 4],
            tau: [0.0; 4],
            alpha: self.alpha,
        };
        tc.fill_named();
        tc
    }
}

/// Transformed coefficients at a point of the domain.
pub fn point_coefficients(
    bg: &BackgroundState,
    scaling: &ViscosityScaling,
    x1: f64,
    x2: f64,
    t: f64,
) -> Result<TransformedCoefficients> {
    Ok(TransformedJets::at(bg, scaling, x1, x2, t)?.values())
}

/// Which boundary operator a residual refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Nsf,
    Euler,
}

/// Wall conditions in physical and characteristic variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryConditionSet {
    pub m_plus: SMatrix<f64, 3, 4>,
    pub m_zero: RowVector4<f64>,
    pub cal_m_plus: SMatrix<f64, 3, 4>,
    pub cal_m_zero: RowVector4<f64>,
    pub alpha: f64,
}

impl BoundaryConditionSet {
    pub fn new(frame: &BoundaryFrame) -> Self {
        #[rustfmt::skip]
        let m_plus = SMatrix::<f64, 3, 4>::new(
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let m_zero = RowVector4::new(0.0, 1.0, 0.0, 0.0);
        let qt = frame.q.transpose();
        Self {
            m_plus,
            m_zero,
            cal_m_plus: m_plus * qt,
            cal_m_zero: m_zero * qt,
            alpha: frame.alpha,
        }
    }
}

/// `(u2 − u3, u0, u1 − √2 α u2)` for the viscous wall, `(u2 − u3)` for the inviscid one.
pub fn bc_residual(bcs: &BoundaryConditionSet, u: &[f64; 4], which: BoundaryKind) -> Vec<f64> {
    match which {
        BoundaryKind::Nsf => vec![u[2] - u[3], u[0], u[1] - SQRT2 * bcs.alpha * u[2]],
        BoundaryKind::Euler => vec![u[2] - u[3]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_matrices, eval_background, EquationOfState};
    use std::sync::Arc;

    fn max_abs(m: &Matrix4<f64>) -> f64 {
        m.abs().max()
    }

    #[test]
    fn eigenvalues_for_sample_alphas() {
        assert_eq!(eigen_frame(0.0).eigenvalues, [0.0, 0.0, 1.0, -1.0]);
        let f = eigen_frame(1.0);
        assert!((f.eigenvalues[2] - SQRT2).abs() < 1e-15);
        assert!((f.eigenvalues[3] + SQRT2).abs() < 1e-15);
        let f = eigen_frame(2.0);
        assert!(max_abs(&(f.q * f.q.transpose() - Matrix4::identity())) < 1e-12);
    }

    #[test]
    fn frame_diagonalizes_a1m() {
        for alpha in [-3.0, -0.4, 0.0, 0.5, 1.0, 2.0, 2.9] {
            let f = eigen_frame(alpha);
            let d = f.q * a1m_matrix(alpha) * f.q.transpose();
            let s = (alpha * alpha + 1.0).sqrt();
            let expect = Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, 0.0, s, -s));
            assert!(max_abs(&(d - expect)) < 1e-12);
        }
    }

    #[test]
    fn characteristic_round_trip_and_examples() {
        let f = eigen_frame(1.0);
        let u = f.to_characteristic(&[1.0, 0.0, 0.0, 1.0]);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
        assert!((u[2] - 1.0).abs() < 1e-15 && (u[3] - 1.0).abs() < 1e-15);
        assert_eq!(f.to_characteristic(&[0.0; 4]), [0.0; 4]);
        let v = [0.3, -1.2, 0.7, 2.2];
        let back = f.from_characteristic(&f.to_characteristic(&v));
        for c in 0..4 {
            assert!((back[c] - v[c]).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_background_coefficients() {
        let bg = BackgroundState::ideal_at_rest();
        let s = ViscosityScaling::new(1.0, 0.0, 1.0, 0.1).unwrap();
        let tc = point_coefficients(&bg, &s, 0.2, 0.3, 0.0).unwrap();
        assert_eq!(tc.alpha, 1.0);
        let eta = tc.eta;
        assert!((eta[0] - 1.0).abs() < 1e-15 && eta[1].abs() < 1e-15);
        assert!((eta[2] - 1.0).abs() < 1e-15 && eta[3].abs() < 1e-15);
        assert!((tc.tau[0] - 0.5).abs() < 1e-15);
        for m in [tc.cal_w, tc.cal_p1, tc.cal_p2, tc.cal_i1, tc.cal_i2, tc.cal_q1, tc.cal_q2] {
            assert_eq!(max_abs(&m), 0.0);
        }
        assert!(max_abs(&(tc.cal_a0 - Matrix4::identity())) < 1e-15);
        assert!(max_abs(&tc.cal_a1r) < 1e-15);
    }

    #[test]
    fn displayed_a2_on_the_wall() {
        let bg = BackgroundState::ideal_at_rest();
        let s = ViscosityScaling::default();
        for alpha_scale in [1.0, 2.5] {
            let bg2 = BackgroundState::constant(1.0, 0.0, 0.0, alpha_scale, EquationOfState::ideal()).unwrap();
            let b = if alpha_scale == 1.0 { &bg } else { &bg2 };
            let tc = point_coefficients(b, &s, 0.0, 0.0, 0.0).unwrap();
            // ideal gas with ρ' = 1 and p'_ρ = θ': α = 1/θ', A2 keeps p_θ/p_ρ = α.
            let alpha = tc.alpha;
            let c = ((alpha * alpha + 1.0) / 2.0).sqrt();
            let mut expect = Matrix4::zeros();
            expect[(0, 2)] = c;
            expect[(0, 3)] = c;
            expect[(2, 0)] = c;
            expect[(3, 0)] = c;
            assert!(max_abs(&(tc.cal_a2 - expect)) < 1e-14);
        }
    }

    #[test]
    fn displayed_g_matches_conjugation() {
        let s = ViscosityScaling::new(1.0, 0.5, 1.0, 0.1).unwrap();
        let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.5, EquationOfState::ideal()).unwrap();
        let tc = point_coefficients(&bg, &s, 0.0, 0.0, 0.0).unwrap();
        let (alpha, p, th) = (tc.alpha, 0.5, 0.5);
        let k = 1.0 / (th * p);
        let s2 = alpha * alpha + 1.0;
        let g = tc.cal_g;
        assert!((g[(0, 0)] - 1.0 / p).abs() < 1e-14);
        assert!((g[(1, 1)] - k / s2).abs() < 1e-14);
        assert!((g[(1, 2)] + alpha * k / (SQRT2 * s2)).abs() < 1e-14);
        assert!((g[(2, 2)] - (0.5 / p + alpha * alpha * k / (2.0 * s2))).abs() < 1e-14);
        assert!((g[(2, 3)] - (-0.5 / p + alpha * alpha * k / (2.0 * s2))).abs() < 1e-14);
        assert_eq!(tc.cal_g12, tc.cal_g12.transpose());
        assert_eq!(tc.cal_g12[(0, 2)], SQRT2 / 4.0);
    }

    #[test]
    fn displayed_a0_entries() {
        let eos = EquationOfState::IdealGas {
            gas_constant: 1.0,
            cv0: 1.7,
            cv1: 0.0,
        };
        let bg = BackgroundState::constant(1.3, 0.0, 0.0, 0.8, eos).unwrap();
        let tc = point_coefficients(&bg, &ViscosityScaling::default(), 0.0, 0.0, 0.0).unwrap();
        let bv = eval_background(&bg, 0.0, 0.0, 0.0).unwrap();
        let (rho, beta, p) = (bv.rho_p, bv.beta_p, bv.p_rho);
        let a = tc.alpha;
        let s2 = a * a + 1.0;
        assert!((tc.cal_a0[(0, 0)] - rho / p).abs() < 1e-14);
        assert!((tc.eta[0] - (a * a / rho + beta) / s2).abs() < 1e-14);
        assert!((tc.eta[1] - (a / (SQRT2 * rho) - a * beta / SQRT2) / s2).abs() < 1e-14);
        assert!((tc.eta[2] - ((0.5 / rho + a * a * beta / 2.0) / s2 + rho / (2.0 * p))).abs() < 1e-14);
        assert!((tc.eta[3] - ((0.5 / rho + a * a * beta / 2.0) / s2 - rho / (2.0 * p))).abs() < 1e-14);
        assert_eq!(tc.cal_a0[(1, 3)], tc.cal_a0[(1, 2)]);
    }

    #[test]
    fn jet_and_pointwise_paths_agree_on_varying_alpha() {
        let bg = BackgroundState::analytic(
            "wave",
            EquationOfState::ideal(),
            false,
            true,
            Arc::new(|x1, x2, t| {
                let s = (*x2 * 1.3 + *t * 0.7).sin() * 0.2 + 1.0;
                [
                    s * (*x1 * 0.2).exp(),
                    *x1 * *x1 * 0.1,
                    (*x1 * 0.5).sin() * 0.3,
                    s.recip() * 1.1,
                ]
            }),
        )
        .unwrap();
        let s = ViscosityScaling::new(0.8, 0.3, 1.2, 0.1).unwrap();
        let (x1, x2, t) = (0.3, 0.4, 0.2);
        let tc = point_coefficients(&bg, &s, x1, x2, t).unwrap();
        let aj = bg.alpha_jet(x2, t).unwrap();
        let frame = eigen_frame(aj.value());
        let fd = FrameDerivatives::from_alpha(aj.value(), aj.d(1), aj.deriv(0, 2, 0), aj.d(2));
        let bv = eval_background(&bg, x1, x2, t).unwrap();
        let m = assemble_matrices(&bv, aj.value(), &s);
        let tc2 = transformed_coeffs(&frame, &m, &fd, &bv, &s);
        let pairs = [
            (tc.cal_a0, tc2.cal_a0),
            (tc.cal_a1r, tc2.cal_a1r),
            (tc.cal_a2, tc2.cal_a2),
            (tc.cal_w, tc2.cal_w),
            (tc.cal_p1, tc2.cal_p1),
            (tc.cal_p2, tc2.cal_p2),
            (tc.cal_i1, tc2.cal_i1),
            (tc.cal_i2, tc2.cal_i2),
            (tc.cal_q1, tc2.cal_q1),
            (tc.cal_q2, tc2.cal_q2),
            (tc.cal_g, tc2.cal_g),
        ];
        for (a, b) in pairs {
            assert!(max_abs(&(a - b)) < 1e-12, "{a} vs {b}");
        }
        assert!(max_abs(&tc.cal_w) > 1e-3);
        assert!(max_abs(&tc.cal_q1) > 1e-4);
        let eig = nalgebra::SymmetricEigen::new(tc.cal_a0).eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn boundary_condition_residuals() {
        let f = eigen_frame(0.7);
        let bcs = BoundaryConditionSet::new(&f);
        let c = 0.3;
        let u = [0.0, SQRT2 * 0.7 * c, c, c];
        assert!(bc_residual(&bcs, &u, BoundaryKind::Nsf).iter().all(|r| r.abs() < 1e-15));
        let u = [0.0, 0.0, c, c];
        assert_eq!(bc_residual(&bcs, &u, BoundaryKind::Euler), vec![0.0]);
        let r = bc_residual(&bcs, &u, BoundaryKind::Nsf);
        assert!((r[2] + SQRT2 * 0.7 * c).abs() < 1e-15);
        let bcs1 = BoundaryConditionSet::new(&eigen_frame(1.0));
        assert_eq!(bc_residual(&bcs1, &[1.0, 0.0, 0.0, 0.0], BoundaryKind::Nsf), vec![0.0, 1.0, 0.0]);
        // characteristic images: cal_M⁺ U = M⁺ Qᵀ U = M⁺ V.
        let v = [0.4, -0.2, 0.9, 0.1];
        let uu = f.to_characteristic(&v);
        let mv = bcs.cal_m_plus * nalgebra::Vector4::from(uu);
        assert!((mv[0] - v[1]).abs() < 1e-14 && (mv[1] - v[2]).abs() < 1e-14 && (mv[2] - v[3]).abs() < 1e-14);
        let ez = (bcs.cal_m_zero * nalgebra::Vector4::from(uu))[0];
        assert!((ez - (uu[2] - uu[3]) / SQRT2).abs() < 1e-14);
    }
}

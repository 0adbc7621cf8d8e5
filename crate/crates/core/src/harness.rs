//! Norms, rate fits, the energy functional and the L∞ interpolation check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Derivatives, StateField};
use crate::grid::Grid;

/// Fraction of `X1max` dropped beyond the sponge before taking norms.
pub const EXTRA_EXCLUSION: f64 = 0.05;

/// Number of leading `x1` rows kept by the norms: those with
/// `x1 ≤ (1 − sponge_fraction − 0.05) X1max`.
pub fn retained_rows(grid: &Grid, sponge_fraction: f64) -> usize {
    let cut = (1.0 - sponge_fraction - EXTRA_EXCLUSION) * grid.spec().x1_max;
    grid.x1().iter().take_while(|&&x| x <= cut * (1.0 + 1e-12)).count()
}

/// `max |w_c|` over retained rows and all fields of the series.
pub fn sup_error(series: &[StateField], grid: &Grid, component: usize, sponge_fraction: f64) -> f64 {
    let rows = retained_rows(grid, sponge_fraction);
    let n2 = grid.n2();
    series
        .iter()
        .flat_map(|w| w.data()[..rows * n2].iter().map(move |u| u[component].abs()))
        .fold(0.0, f64::max)
}

pub fn sup_errors(series: &[StateField], grid: &Grid, sponge_fraction: f64) -> [f64; 4] {
    [0, 1, 2, 3].map(|c| sup_error(series, grid, c, sponge_fraction))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `log error`.
    pub residual: f64,
}

/// Least-squares line through `(log ε, log error)`.
pub fn fit_rate(epsilons: &[f64], errors: &[f64]) -> Result<RateFit> {
    if epsilons.len() != errors.len() || epsilons.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least three (epsilon, error) pairs, got {} and {}",
            epsilons.len(),
            errors.len()
        )));
    }
    if errors.iter().chain(epsilons).any(|&e| !(e > 0.0)) {
        return Err(Error::NonPositiveError);
    }
    let x: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("epsilons must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// `‖w(t)‖²` and `ε² Σ_{j=1..3} ∫₀ᵗ ‖∇w_j‖² ds` over retained rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub l2_norm_sq: Vec<f64>,
    pub grad_integral: Vec<f64>,
}

impl EnergyTrace {
    /// `sup_t (‖w‖² + ε² ∫ ‖∇w‖²)`.
    pub fn functional(&self) -> f64 {
        self.l2_norm_sq
            .iter()
            .zip(&self.grad_integral)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }
}

fn retained_norms(w: &StateField, grid: &Grid, rows: usize) -> (f64, f64) {
    let d = Derivatives::new(grid);
    let w1 = grid.weight1();
    let (mut l2, mut grad) = (0.0, 0.0);
    for i in 0..rows {
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..grid.n2() {
            let u = w.at(i, j);
            a += u.iter().map(|x| x * x).sum::<f64>();
            let g1 = d.d1_at(w, i, j);
            let g2 = d.d2_at(w, i, j);
            b += (1..4).map(|c| g1[c] * g1[c] + g2[c] * g2[c]).sum::<f64>();
        }
        l2 += w1[i] * a;
        grad += w1[i] * b;
    }
    (l2 * grid.dx2(), grad * grid.dx2())
}

pub fn energy_trace(
    series: &[StateField],
    times: &[f64],
    grid: &Grid,
    epsilon: f64,
    sponge_fraction: f64,
) -> Result<EnergyTrace> {
    if series.len() != times.len() {
        return Err(Error::InvalidInput(format!(
            "{} fields for {} times",
            series.len(),
            times.len()
        )));
    }
    if let Some(w) = series.iter().find(|w| !w.matches(grid)) {
        return Err(Error::GridMismatch(format!("field is {} x {}", w.n1(), w.n2())));
    }
    let rows = retained_rows(grid, sponge_fraction);
    let mut tr = EnergyTrace::default();
    let mut prev_grad = 0.0;
    let mut acc = 0.0;
    for (k, (w, &t)) in series.iter().zip(times).enumerate() {
        let (l2, grad) = retained_norms(w, grid, rows);
        if k > 0 {
            acc += 0.5 * (t - times[k - 1]) * (grad + prev_grad) * epsilon * epsilon;
        }
        prev_grad = grad;
        tr.times.push(t);
        tr.l2_norm_sq.push(l2);
        tr.grad_integral.push(acc);
    }
    Ok(tr)
}

/// Fits `sup_t` of the functional against `ε`; the theory slope is `2N + 1`.
pub fn energy_rate_check(epsilons: &[f64], traces: &[EnergyTrace]) -> Result<RateFit> {
    let f: Vec<f64> = traces.iter().map(EnergyTrace::functional).collect();
    fit_rate(epsilons, &f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `max|f| ≤ 2 (‖f‖ ‖∂1 f‖ ‖∂2 f‖ ‖∂12 f‖)^{1/4}` with grid quadrature and
/// second-order differences; `f` is indexed `[i * n2 + j]`.
pub fn linf_interpolation_check(f: &[f64], grid: &Grid) -> Result<LinfCheck> {
    if f.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", f.len(), grid.len())));
    }
    let field = StateField::from_data(grid.n1(), grid.n2(), f.iter().map(|&v| [v, 0.0, 0.0, 0.0]).collect());
    let d = Derivatives::new(grid);
    let f1 = d.d1(&field);
    let f2 = d.d2(&field);
    let f12 = d.d2(&f1);
    let norm = |g: &StateField| g.comp_norm_sq(grid, 0).sqrt();
    let lhs = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rhs = 2.0 * (norm(&field) * norm(&f1) * norm(&f2) * norm(&f12)).powf(0.25);
    Ok(LinfCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Per-component sup errors over a decreasing `ε` list and the fitted rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub order: usize,
    pub epsilons: Vec<f64>,
    /// `errors[k] = (ρ, v1, v2, θ)` at `epsilons[k]`.
    pub errors: Vec<[f64; 4]>,
    pub fitted_rates: [f64; 4],
    /// `N − 1` for `ρ`, `N − 3/4` for the rest.
    pub theory_rates: [f64; 4],
}

/// Slopes may fall short of theory by at most this much.
pub const RATE_SLACK: f64 = 0.35;

impl ConvergenceStudy {
    pub fn new(order: usize, epsilons: Vec<f64>, errors: Vec<[f64; 4]>) -> Result<Self> {
        if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("epsilons must be strictly decreasing".into()));
        }
        if epsilons.len() != errors.len() {
            return Err(Error::InvalidInput("one error row per epsilon".into()));
        }
        let mut fitted_rates = [0.0; 4];
        for (c, r) in fitted_rates.iter_mut().enumerate() {
            let e: Vec<f64> = errors.iter().map(|row| row[c]).collect();
            *r = fit_rate(&epsilons, &e)?.slope;
        }
        let n = order as f64;
        Ok(Self {
            order,
            epsilons,
            errors,
            fitted_rates,
            theory_rates: [n - 1.0, n - 0.75, n - 0.75, n - 0.75],
        })
    }

    /// `fitted ≥ theory − 0.35` per component.
    pub fn rate_passes(&self) -> [bool; 4] {
        [0, 1, 2, 3].map(|c| self.fitted_rates[c] >= self.theory_rates[c] - RATE_SLACK)
    }

    /// Each error strictly below the previous one, per component.
    pub fn monotone(&self) -> [bool; 4] {
        [0, 1, 2, 3].map(|c| self.errors.windows(2).all(|w| w[1][c] < w[0][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_field_has_zero_sup() {
        let grid = GridSpec::uniform(1.0, 1.0, 20, 4).build().unwrap();
        assert_eq!(sup_error(&[StateField::zeros(&grid)], &grid, 1, 0.1), 0.0);
    }

    #[test]
    fn smooth_bump_height_is_recovered() {
        let grid = GridSpec::uniform(2.0, 1.0, 200, 40).build().unwrap();
        let h = 0.37;
        let w = StateField::from_fn(&grid, |x1, x2| {
            let r = ((x1 - 0.5).powi(2) + (x2 - 0.5).powi(2)) / 0.04;
            [0.0, 0.0, h * (-r).exp(), 0.0]
        });
        assert!((sup_error(&[w], &grid, 2, 0.1) - h).abs() < 1e-12);
    }

    #[test]
    fn bump_inside_sponge_is_ignored() {
        let grid = GridSpec::uniform(2.0, 1.0, 200, 8).build().unwrap();
        let w = StateField::from_fn(&grid, |x1, _| {
            let r = (x1 - 1.9) / 0.05;
            [if r.abs() < 1.0 { 1.0 - r * r } else { 0.0 }; 4]
        });
        assert_eq!(sup_errors(&[w], &grid, 0.1), [0.0; 4]);
        assert_eq!(retained_rows(&grid, 0.1), 171);
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let e2: Vec<f64> = eps.iter().map(|e: &f64| e * e).collect();
        let f = fit_rate(&eps, &e2).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let e3: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powf(1.25)).collect();
        let f = fit_rate(&eps, &e3).unwrap();
        assert!((f.slope - 1.25).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law_stays_near_the_slope() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let e: Vec<f64> = eps
                .iter()
                .map(|x: &f64| x.powf(1.25) * (1.0 + rng.random_range(-0.05..0.05)))
                .collect();
            let f = fit_rate(&eps, &e).unwrap();
            assert!((f.slope - 1.25).abs() < 0.15, "{}", f.slope);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_rate(&[0.2, 0.1, 0.05], &[1.0, 0.0, 1.0]),
            Err(Error::NonPositiveError)
        ));
        assert!(fit_rate(&[0.2, 0.1], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn zero_and_static_energy_traces() {
        let grid = GridSpec::uniform(2.0, 1.0, 40, 8).build().unwrap();
        let times = [0.0, 0.1, 0.2, 0.3];
        let z = vec![StateField::zeros(&grid); 4];
        let tr = energy_trace(&z, &times, &grid, 0.1, 0.1).unwrap();
        assert!(tr.l2_norm_sq.iter().chain(&tr.grad_integral).all(|&v| v == 0.0));

        let w0 = StateField::from_fn(&grid, |x1, x2| [x1.sin(), x1 * x2, (3.0 * x2).cos(), 1.0]);
        let tr = energy_trace(&vec![w0; 4], &times, &grid, 0.1, 0.1).unwrap();
        assert!(tr.l2_norm_sq.windows(2).all(|w| w[0] == w[1]));
        let rate = tr.grad_integral[1] / times[1];
        assert!(rate > 0.0);
        for (g, t) in tr.grad_integral.iter().zip(times) {
            assert!((g - rate * t).abs() < 1e-12 * rate.max(1.0));
        }
    }

    #[test]
    fn constructed_scaling_gives_slope_two_n_plus_one() {
        let grid = GridSpec::uniform(2.0, 1.0, 40, 8).build().unwrap();
        let times = [0.0, 0.25, 0.5];
        let profile = StateField::from_fn(&grid, |x1, x2| {
            let b = (-(x1 - 0.7).powi(2) * 8.0).exp() * (2.0 * std::f64::consts::PI * x2).cos();
            [b, 0.5 * b, -b, 0.3 * b]
        });
        for n in 1..=3 {
            let eps = [0.2, 0.1, 0.05, 0.025];
            let traces: Vec<EnergyTrace> = eps
                .iter()
                .map(|&e: &f64| {
                    let mut w = profile.clone();
                    w.scale(e.powf((2 * n + 1) as f64 / 2.0));
                    // The gradient term carries an extra ε²; drop it so the scaling is exact.
                    energy_trace(&vec![w; 3], &times, &grid, 0.0, 0.1).unwrap()
                })
                .collect();
            let f = energy_rate_check(&eps, &traces).unwrap();
            assert!((f.slope - (2 * n + 1) as f64).abs() < 1e-10, "{}", f.slope);
        }
    }

    #[test]
    fn grad_integral_is_nondecreasing() {
        let grid = GridSpec::uniform(2.0, 1.0, 40, 8).build().unwrap();
        let series: Vec<StateField> = (0..6)
            .map(|k| StateField::from_fn(&grid, |x1, x2| [0.0, (k as f64 * x1).sin(), x2 * x1, 0.0]))
            .collect();
        let times: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let tr = energy_trace(&series, &times, &grid, 0.2, 0.1).unwrap();
        assert!(tr.grad_integral.windows(2).all(|w| w[1] >= w[0]));
        assert!(tr.l2_norm_sq.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_field_satisfies_the_interpolation_inequality() {
        let grid = GridSpec::uniform(1.0, 1.0, 8, 8).build().unwrap();
        let c = linf_interpolation_check(&vec![0.0; grid.len()], &grid).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (0.0, 0.0, true));
    }

    /// `f = e^{−x1} e^{−x2²}` on `[0, 12] × [−6, 6)`: all four norms equal
    /// `(√(π/2) / 2)^{1/2}`.
    #[test]
    fn separable_exponential_gaussian() {
        let grid = GridSpec::uniform(12.0, 12.0, 1200, 600).build().unwrap();
        let f: Vec<f64> = grid
            .x1()
            .iter()
            .flat_map(|&x1| grid.x2().iter().map(move |&x2| (-x1).exp() * (-(x2 - 6.0).powi(2)).exp()))
            .collect();
        let c = linf_interpolation_check(&f, &grid).unwrap();
        // ∫ e^{−2x1} = 1/2, ∫ e^{−2y²} = √(π/2), ∫ 4y² e^{−2y²} = √(π/2).
        let g = (std::f64::consts::PI / 2.0).sqrt();
        let n = (0.5 * g).sqrt();
        let exact = 2.0 * (n * n * n * n).powf(0.25);
        assert!((c.rhs - exact).abs() < 1e-3 * exact, "{} vs {exact}", c.rhs);
        assert!((c.lhs - 1.0).abs() < 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn random_decaying_fields_satisfy_the_inequality() {
        let checks = crate::checks::interpolation_battery(100, 2024).unwrap();
        for (k, c) in checks.iter().enumerate() {
            assert!(c.holds, "field {k}: {} > {}", c.lhs, c.rhs);
        }
    }

    #[test]
    fn study_rates_and_gates() {
        let eps = vec![0.2, 0.1, 0.05];
        let errors: Vec<[f64; 4]> = eps.iter().map(|&e: &f64| [e, e.powf(0.25), e.powf(0.3), e]).collect();
        let s = ConvergenceStudy::new(1, eps, errors).unwrap();
        assert!((s.fitted_rates[1] - 0.25).abs() < 1e-12);
        assert_eq!(s.theory_rates, [0.0, 0.25, 0.25, 0.25]);
        assert_eq!(s.rate_passes(), [true; 4]);
        assert_eq!(s.monotone(), [true; 4]);
        assert!(ConvergenceStudy::new(1, vec![0.1, 0.2, 0.05], vec![[1.0; 4]; 3]).is_err());
    }

    proptest! {
        #[test]
        fn sup_error_is_monotone_under_domination(
            vals in proptest::collection::vec(-1.0f64..1.0, 16 * 4 * 4),
            scale in proptest::collection::vec(0.0f64..1.0, 16 * 4 * 4),
        ) {
            let grid = GridSpec::uniform(1.0, 1.0, 15, 4).build().unwrap();
            let big = StateField::from_data(16, 4, vals.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect());
            let small = StateField::from_data(
                16,
                4,
                vals.chunks(4).zip(scale.chunks(4)).map(|(c, s)| [0, 1, 2, 3].map(|k| c[k] * s[k])).collect(),
            );
            for c in 0..4 {
                prop_assert!(sup_error(std::slice::from_ref(&small), &grid, c, 0.1) <= sup_error(std::slice::from_ref(&big), &grid, c, 0.1));
            }
        }
    }
}

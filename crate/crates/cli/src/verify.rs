//! Property batteries behind the `verify` subcommand.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nsf_layers::checks::{
    acoustic_energy_trace, acoustic_manufactured_errors, background_with_alpha, frame_audit, interpolation_battery,
    isentropic_eigenvalues, layer_ode_audit, max_energy_growth, observed_orders, prandtl_manufactured_errors,
    prandtl_oracle_gap, random_alphas, reference_energy_trace, reference_manufactured_errors,
};
use nsf_layers::grid::GridSpec;
use nsf_layers::{BackgroundState, EquationOfState, ViscosityScaling};

use crate::config::RunConfig;
use crate::pipeline::run_build;

pub const ALPHA_SWEEP: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const FRAME_TOL: f64 = 1e-12;
pub const MIN_ORDER: f64 = 1.8;
pub const CLOSED_FORM_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-4;
pub const ENERGY_STEP_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

type Outcome = nsf_layers::Result<(bool, String)>;
type Check<'a> = (String, Box<dyn Fn() -> Outcome + Send + Sync + 'a>);

fn orders_pass(errors: &[f64]) -> (bool, String) {
    let o = observed_orders(errors);
    let ok = !o.is_empty() && o.iter().all(|&r| r >= MIN_ORDER);
    (ok, format!("errors {errors:?}, orders {o:?}"))
}

fn last_order_passes(errors: &[f64]) -> (bool, String) {
    let o = observed_orders(errors);
    let ok = o.last().is_some_and(|&r| r >= MIN_ORDER);
    (ok, format!("errors {errors:?}, orders {o:?}"))
}

fn checks(cfg: &RunConfig) -> Vec<Check<'_>> {
    let mut list: Vec<Check<'_>> = Vec::new();
    let n = cfg.verify.random_alphas;
    let seed = cfg.seed;
    list.push((
        "frame: random alphas".into(),
        Box::new(move || {
            let a = frame_audit(&random_alphas(n, seed));
            Ok((
                a.orthogonality < FRAME_TOL && a.diagonalization < FRAME_TOL,
                format!("{n} draws: {a:?}"),
            ))
        }),
    ));
    list.push((
        "frame: isentropic eigenvalues".into(),
        Box::new(|| {
            let e = isentropic_eigenvalues()?;
            Ok((e == [0.0, 0.0, 1.0, -1.0], format!("{e:?}")))
        }),
    ));
    for alpha in ALPHA_SWEEP {
        list.push((
            format!("frame: alpha = {alpha}"),
            Box::new(move || {
                let a = frame_audit(&[alpha]);
                Ok((a.orthogonality < FRAME_TOL && a.diagonalization < FRAME_TOL, format!("{a:?}")))
            }),
        ));
        list.push((
            format!("layer ODE: alpha = {alpha}"),
            Box::new(move || {
                let a = layer_ode_audit(&background_with_alpha(alpha)?)?;
                let (orders_ok, detail) = orders_pass(&a.residuals);
                let ok = (a.alpha - alpha).abs() < 1e-15
                    && a.closed_form_error < CLOSED_FORM_TOL
                    && a.mirror_gap == 0.0
                    && orders_ok;
                Ok((ok, format!("closed form {:e}, mirror {:e}, {detail}", a.closed_form_error, a.mirror_gap)))
            }),
        ));
    }
    let flip = cfg.verify.flip_tau0;
    list.push((
        "prandtl: manufactured solution".into(),
        Box::new(move || {
            let e = prandtl_manufactured_errors(&[(50, 10), (100, 20), (200, 40)], flip)?;
            Ok(orders_pass(&e))
        }),
    ));
    list.push((
        "prandtl: fine-grid oracle".into(),
        Box::new(|| {
            let (worst, tail) = prandtl_oracle_gap()?;
            Ok((worst <= ORACLE_TOL, format!("gap {worst:e}, tail {tail:e}")))
        }),
    ));
    for graded in [false, true] {
        list.push((
            format!("acoustic: manufactured solution ({})", if graded { "graded" } else { "uniform" }),
            Box::new(move || Ok(last_order_passes(&acoustic_manufactured_errors(&[16, 32, 64], graded)?))),
        ));
    }
    list.push((
        "reference: manufactured solution".into(),
        Box::new(|| {
            let bg = BackgroundState::constant(1.0, 0.0, 0.0, 0.8, EquationOfState::ideal())?;
            let s = ViscosityScaling::new(1.0, 0.3, 1.2, 0.1)?;
            let specs = [16, 32, 64].map(|n| GridSpec::uniform(1.0, 1.0, n, n));
            Ok(last_order_passes(&reference_manufactured_errors(&bg, s, &specs)?))
        }),
    ));
    list.push((
        "acoustic: energy non-increasing".into(),
        Box::new(|| {
            let g = max_energy_growth(&acoustic_energy_trace()?);
            Ok((g <= ENERGY_STEP_TOL, format!("largest relative step growth {g:e}")))
        }),
    ));
    list.push((
        "reference: energy non-increasing".into(),
        Box::new(|| {
            let (e, wall) = reference_energy_trace()?;
            let g = max_energy_growth(&e);
            Ok((
                g <= ENERGY_STEP_TOL && wall == 0.0,
                format!("largest relative step growth {g:e}, wall residual {wall:e}"),
            ))
        }),
    ));
    let (count, seed) = (cfg.verify.interpolation_fields, cfg.seed);
    list.push((
        "interpolation inequality".into(),
        Box::new(move || {
            let r = interpolation_battery(count, seed)?;
            let bad = r.iter().filter(|c| !c.holds).count();
            let ratio = r.iter().map(|c| c.lhs / c.rhs).fold(0.0, f64::max);
            Ok((bad == 0 && r.len() == count, format!("{bad} of {count} violate, max lhs/rhs {ratio:.4}")))
        }),
    ));
    list.push((
        "layer structure".into(),
        Box::new(move || {
            let small = structure_config(cfg);
            let b = run_build(&small).map_err(|e| nsf_layers::Error::InvalidInput(format!("{e:#}")))?;
            let tol = 10.0 * cfg.tol.bc_tol;
            let ok = b.expansion.log.iter().all(|l| {
                l.b0_outgoing == 0.0
                    && l.initial_layer == 0.0
                    && l.coupling_b0.max(l.coupling_b1).max(l.coupling_ii) <= tol
            });
            let worst = b.stage.residual;
            Ok((ok, format!("orders 0..={}, worst coupling {worst:e}", small.order)))
        }),
    ));
    list
}

/// The build used by the layer-structure check: the configured background and
/// pulse on a coarse grid over a short time.
pub fn structure_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.acoustic.n1 = 200;
    c.grid.n2 = 16;
    c.time.t_end = 0.2;
    c.time.intervals = 2;
    c.layer.dz = 0.1;
    c
}

pub fn run_verify(cfg: &RunConfig) -> VerifyReport {
    let checks = checks(cfg)
        .into_par_iter()
        .map(|(name, f)| {
            let clock = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds: clock.elapsed().as_secs_f64(),
            }
        })
        .collect();
    VerifyReport { checks }
}

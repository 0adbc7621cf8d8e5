//! Build, reference and convergence runs driven by a [`RunConfig`].

use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nsf_layers::acoustic::{AcousticOptions, CoefficientField};
use nsf_layers::composer::{build_expansion, compose, to_characteristic_field, BuildConfig, ExpansionSet};
use nsf_layers::harness::{energy_rate_check, energy_trace, sup_errors, ConvergenceStudy, EnergyTrace, RateFit};
use nsf_layers::layers::LayerOptions;
use nsf_layers::prandtl::PrandtlOptions;
use nsf_layers::reference::{error_field, solve_nsf, NsfProblem, ReferenceOptions, ReferenceSolution};
use nsf_layers::{Grid, StateField, TimeGrid};

use crate::config::RunConfig;

/// Wall-clock time and the worst residual of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub residual: f64,
}

/// Initial data in physical variables on `grid`.
pub fn initial_state(cfg: &RunConfig, grid: &Grid) -> StateField {
    let len = cfg.grid.x2_len;
    StateField::from_fn(grid, |x1, x2| cfg.init.eval(x1, x2, len))
}

/// Layer levels per snapshot interval times `intervals`, with the acoustic step
/// inside the CFL bound.
pub fn time_grid(cfg: &RunConfig, grid: &Grid) -> Result<TimeGrid> {
    let bg = cfg.background_state()?;
    let scaling = cfg.scaling_for(cfg.epsilons[0])?;
    let speed = CoefficientField::sample(&bg, &scaling, grid, 0.0)?.max_speed();
    let dt_max = cfg.acoustic.cfl * grid.dx1_min().min(grid.dx2()) / speed.max(1e-300);
    let fitted = TimeGrid::fitted(cfg.time.t_end, dt_max, cfg.acoustic.substeps)?;
    let per = fitted.levels.div_ceil(cfg.time.intervals);
    Ok(TimeGrid::new(cfg.time.t_end, per * cfg.time.intervals, cfg.acoustic.substeps)?)
}

pub fn build_config(cfg: &RunConfig) -> Result<BuildConfig> {
    let spec = cfg.acoustic_grid();
    let grid = spec.build()?;
    let time = time_grid(cfg, &grid)?;
    let per = time.levels / cfg.time.intervals;
    Ok(BuildConfig {
        bg: cfg.background_state()?,
        scaling: cfg.scaling_for(cfg.epsilons[0])?,
        grid: spec,
        layer_grid: cfg.layer_grid()?,
        time,
        order: cfg.order,
        snapshot_levels: (0..=cfg.time.intervals).map(|k| k * per).collect(),
        acoustic: AcousticOptions {
            cfl: cfg.acoustic.cfl,
            sponge_fraction: cfg.acoustic.sponge_fraction,
            sponge_strength: cfg.acoustic.sponge_strength,
            ..Default::default()
        },
        prandtl: PrandtlOptions {
            compat_tol: cfg.tol.compat_tol,
            ..Default::default()
        },
        layer: LayerOptions {
            tail_tol: cfg.layer.tail_tol,
        },
    })
}

pub struct Build {
    pub expansion: ExpansionSet,
    pub stage: StageRecord,
}

/// Builds the expansion up to `cfg.order` from the configured pulse.
pub fn run_build(cfg: &RunConfig) -> Result<Build> {
    let clock = Instant::now();
    let bc = build_config(cfg)?;
    let grid = bc.grid.build()?;
    let u0 = to_characteristic_field(&bc.bg, &grid, &initial_state(cfg, &grid), 0.0)?;
    let expansion = build_expansion(&bc, &u0).context("building the expansion")?;
    let residual = expansion
        .log
        .iter()
        .map(|l| l.coupling_b0.max(l.coupling_b1).max(l.coupling_ii).max(l.acoustic_bc))
        .fold(0.0, f64::max);
    Ok(Build {
        expansion,
        stage: StageRecord {
            name: "build".into(),
            seconds: clock.elapsed().as_secs_f64(),
            residual,
        },
    })
}

pub fn reference_options(cfg: &RunConfig) -> ReferenceOptions {
    ReferenceOptions {
        cfl: cfg.reference.cfl,
        sponge_fraction: cfg.reference.sponge_fraction,
        sponge_strength: cfg.reference.sponge_strength,
        ..Default::default()
    }
}

pub struct Reference {
    pub grid: Grid,
    pub solution: ReferenceSolution,
    pub stage: StageRecord,
}

/// Direct NSF solve at one `ε` on its graded grid.
pub fn run_reference(cfg: &RunConfig, epsilon: f64) -> Result<Reference> {
    let clock = Instant::now();
    let grid = cfg.reference_grid(epsilon)?.build()?;
    let problem = NsfProblem::new(cfg.background_state()?, cfg.scaling_for(epsilon)?, initial_state(cfg, &grid));
    let solution = solve_nsf(&problem, &grid, cfg.time.t_end, cfg.time.intervals, &reference_options(cfg))
        .with_context(|| format!("reference solve at epsilon {epsilon}"))?;
    let residual = solution.wall_residual;
    Ok(Reference {
        grid,
        solution,
        stage: StageRecord {
            name: format!("reference eps={epsilon}"),
            seconds: clock.elapsed().as_secs_f64(),
            residual,
        },
    })
}

/// Orders compared in a convergence run: `1..=N`, or just `0`.
pub fn study_orders(order: usize) -> Vec<usize> {
    if order == 0 {
        vec![0]
    } else {
        (1..=order).collect()
    }
}

/// Errors of every compared order at one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    /// `errors[k]`: sup errors `(ρ, v1, v2, θ)` of order `study_orders[k]`.
    pub errors: Vec<[f64; 4]>,
    pub energy: Vec<EnergyTrace>,
    pub reference_steps: usize,
    pub reference_dt: f64,
    pub stages: Vec<StageRecord>,
}

/// Reference solve at `ε` and the sup errors of the composed approximations.
pub fn compare_at(cfg: &RunConfig, exp: &ExpansionSet, epsilon: f64) -> Result<EpsilonResult> {
    let reference = run_reference(cfg, epsilon)?;
    let clock = Instant::now();
    let grid = &reference.grid;
    let sol = &reference.solution;
    let per = exp.time.levels / cfg.time.intervals;
    let sf = cfg.reference.sponge_fraction;
    let mut errors = Vec::new();
    let mut energy = Vec::new();
    for n in study_orders(cfg.order) {
        let mut series = Vec::with_capacity(sol.snapshots.len());
        for (k, (snap, &t)) in sol.snapshots.iter().zip(&sol.times).enumerate() {
            let approx = compose(exp, n, epsilon, k * per, grid)?;
            if (approx.t - t).abs() > 1e-9 * cfg.time.t_end.max(1.0) {
                bail!("snapshot {k}: composed at t = {}, reference at t = {t}", approx.t);
            }
            series.push(error_field(snap, &approx)?);
        }
        errors.push(sup_errors(&series, grid, sf));
        energy.push(energy_trace(&series, &sol.times, grid, epsilon, sf)?);
    }
    let compare = StageRecord {
        name: format!("compare eps={epsilon}"),
        seconds: clock.elapsed().as_secs_f64(),
        residual: 0.0,
    };
    Ok(EpsilonResult {
        epsilon,
        errors,
        energy,
        reference_steps: sol.steps,
        reference_dt: sol.dt,
        stages: vec![reference.stage, compare],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    pub study: ConvergenceStudy,
    pub rate_passes: [bool; 4],
    pub monotone: [bool; 4],
    pub energy_functional: Vec<f64>,
    pub energy_fit: RateFit,
}

pub struct Converge {
    pub build: Build,
    pub per_epsilon: Vec<EpsilonResult>,
    pub studies: Vec<OrderStudy>,
}

/// One expansion, one reference solve per `ε`, and a rate study per order.
pub fn run_converge(cfg: &RunConfig) -> Result<Converge> {
    cfg.validate()?;
    if cfg.epsilons.len() < 3 {
        bail!("a convergence study needs at least three epsilons");
    }
    let build = run_build(cfg)?;
    let per_epsilon = cfg
        .epsilons
        .par_iter()
        .map(|&e| compare_at(cfg, &build.expansion, e))
        .collect::<Result<Vec<_>>>()?;
    let studies = studies_from(cfg, &per_epsilon)?;
    Ok(Converge {
        build,
        per_epsilon,
        studies,
    })
}

pub fn studies_from(cfg: &RunConfig, runs: &[EpsilonResult]) -> Result<Vec<OrderStudy>> {
    let eps: Vec<f64> = runs.iter().map(|r| r.epsilon).collect();
    study_orders(cfg.order)
        .into_iter()
        .enumerate()
        .map(|(k, n)| {
            let errors: Vec<[f64; 4]> = runs.iter().map(|r| r.errors[k]).collect();
            let traces: Vec<EnergyTrace> = runs.iter().map(|r| r.energy[k].clone()).collect();
            let study = ConvergenceStudy::new(n, eps.clone(), errors)?;
            Ok(OrderStudy {
                rate_passes: study.rate_passes(),
                monotone: study.monotone(),
                energy_functional: traces.iter().map(EnergyTrace::functional).collect(),
                energy_fit: energy_rate_check(&eps, &traces)?,
                study,
            })
        })
        .collect()
}

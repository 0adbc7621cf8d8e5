//! Fixed workloads shared by the benchmarks.

use std::f64::consts::PI;

use nsf_layers::acoustic::{AcousticOptions, AcousticProblem};
use nsf_layers::composer::{to_characteristic_field, BuildConfig};
use nsf_layers::layers::LayerOptions;
use nsf_layers::prandtl::{LayerProfile, PrandtlCoefficients, PrandtlOptions, PrandtlPoint};
use nsf_layers::reference::NsfProblem;
use nsf_layers::{BackgroundState, Grid, GridSpec, LayerGrid, Result, StateField, TimeGrid, ViscosityScaling};

fn bump(x: f64, centre: f64, half: f64) -> f64 {
    let s = (x - centre) / half;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(4)
    }
}

/// Density pulse near the wall, at rest, in physical variables.
pub fn pulse(grid: &Grid) -> StateField {
    let len = grid.spec().x2_len;
    StateField::from_fn(grid, |x1, x2| {
        [bump(x1, 0.4, 0.3) * (1.0 + 0.5 * (2.0 * PI * x2 / len).cos()), 0.0, 0.0, 0.0]
    })
}

pub struct PrandtlCase {
    pub coeffs: PrandtlCoefficients,
    pub wall: Vec<Vec<[f64; 2]>>,
    pub grid: LayerGrid,
    pub n2: usize,
    pub dt: f64,
}

/// Heat-type Prandtl system with oscillating wall data on `n2` lines.
pub fn prandtl_case(nz: usize, steps: usize, n2: usize) -> Result<PrandtlCase> {
    let dt = 0.5 / steps as f64;
    let wall = (0..=steps)
        .map(|n| {
            let t = n as f64 * dt;
            (0..n2)
                .map(|j| {
                    let y = 2.0 * PI * j as f64 / n2 as f64;
                    [(3.0 * t).sin().powi(2) * y.cos(), -(2.0 * t).sin().powi(2)]
                })
                .collect()
        })
        .collect();
    Ok(PrandtlCase {
        coeffs: PrandtlCoefficients::uniform(PrandtlPoint::heat(1.0, 0.5)),
        wall,
        grid: LayerGrid::new(12.0, nz)?,
        n2,
        dt,
    })
}

pub fn zero_profile(case: &PrandtlCase) -> LayerProfile {
    LayerProfile::zeros(case.grid, case.n2, case.dt, case.wall.len())
}

/// Acoustic pulse on an `n1 × n2` uniform grid over `[0, 2.5] × [0, 2)`.
pub fn acoustic_case(n1: usize, n2: usize) -> Result<(AcousticProblem, Grid)> {
    let grid = GridSpec::uniform(2.5, 2.0, n1, n2).build()?;
    let bg = BackgroundState::ideal_at_rest();
    let u0 = to_characteristic_field(&bg, &grid, &pulse(&grid), 0.0)?;
    Ok((AcousticProblem::homogeneous(bg, ViscosityScaling::default(), u0), grid))
}

/// Direct NSF pulse problem on the graded grid for `epsilon`.
pub fn nsf_case(n1: usize, n2: usize, epsilon: f64) -> Result<(NsfProblem, Grid)> {
    let grid = GridSpec::graded_for(2.5, 2.0, n1, n2, epsilon, 16.0)?.build()?;
    let s = ViscosityScaling::new(1.0, 0.0, 1.0, epsilon)?;
    Ok((NsfProblem::new(BackgroundState::ideal_at_rest(), s, pulse(&grid)), grid))
}

/// Expansion build of order `order` on a coarse grid, with one snapshot at the end.
pub fn build_case(order: usize, n1: usize, n2: usize, t_end: f64) -> Result<(BuildConfig, StateField)> {
    let spec = GridSpec::uniform(2.5, 2.0, n1, n2);
    let grid = spec.build()?;
    let dx = (2.5 / n1 as f64).min(2.0 / n2 as f64);
    let time = TimeGrid::fitted(t_end, 0.5 * dx, 2)?;
    let bg = BackgroundState::ideal_at_rest();
    let u0 = to_characteristic_field(&bg, &grid, &pulse(&grid), 0.0)?;
    let cfg = BuildConfig {
        bg,
        scaling: ViscosityScaling::default(),
        grid: spec,
        layer_grid: LayerGrid::with_spacing(12.0, 0.1)?,
        time,
        order,
        snapshot_levels: vec![time.levels],
        acoustic: AcousticOptions::default(),
        prandtl: PrandtlOptions::default(),
        layer: LayerOptions { tail_tol: 1e-8 },
    };
    Ok((cfg, u0))
}

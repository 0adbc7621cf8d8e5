//! Order-by-order construction of the inner terms `Eⁱ` and the layers `Bⁱ`,
//! and composition of `W^ε = Σ εⁱ Eⁱ(x) + Σ εⁱ Bⁱ(x1/ε, x2)`.

use serde::{Deserialize, Serialize};

use crate::acoustic::{
    solve_euler, AcousticOptions, AcousticProblem, AcousticSolution, BoundaryData, LevelSeries, Source,
};
use crate::characteristic::{eigen_frame, mat_vec};
use crate::error::{Error, Result};
use crate::field::{Derivatives, StateField};
use crate::grid::{Grid, GridSpec, LayerGrid, TimeGrid};
use crate::layers::{assemble_f, layer_ode_rhs, solve_layer_ode, BoundaryOperatorCoeffs, LayerOptions};
use crate::model::{BackgroundState, ViscosityScaling};
use crate::prandtl::{solve_prandtl, LayerProfile, PrandtlCoefficients, PrandtlOptions};

/// Everything `build_expansion` needs besides the initial data.
#[derive(Clone)]
pub struct BuildConfig {
    pub bg: BackgroundState,
    pub scaling: ViscosityScaling,
    pub grid: GridSpec,
    pub layer_grid: LayerGrid,
    pub time: TimeGrid,
    pub order: usize,
    /// Layer levels at which inner snapshots are kept for composition.
    pub snapshot_levels: Vec<usize>,
    pub acoustic: AcousticOptions,
    pub prandtl: PrandtlOptions,
    pub layer: LayerOptions,
}

/// Diagnostics of one order of the construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderLog {
    pub order: usize,
    /// Largest `|E2 − E3 − g|` reported by the acoustic solve.
    pub acoustic_bc: f64,
    /// Largest `|Bⁱ0 + Eⁱ0|` on the wall.
    pub coupling_b0: f64,
    /// Largest `|Bⁱ1 + Eⁱ1 − √2α(Eⁱ2 + Bⁱ2)|` on the wall.
    pub coupling_b1: f64,
    /// Largest `|Eⁱ2 − Eⁱ3 + Bⁱ2 − Bⁱ3|` on the wall.
    pub coupling_ii: f64,
    /// Largest `|Bⁱ|` at `t = 0`.
    pub initial_layer: f64,
    /// Largest `|B⁰2|, |B⁰3|`; zero by construction.
    pub b0_outgoing: f64,
    /// Tail of the layer over `[0.9 Z1max, Z1max]`.
    pub tail: f64,
    pub seconds: f64,
}

/// Inner and layer terms up to order `N`.
pub struct ExpansionSet {
    pub order: usize,
    pub bg: BackgroundState,
    pub scaling: ViscosityScaling,
    pub grid: Grid,
    pub layer_grid: LayerGrid,
    pub time: TimeGrid,
    pub snapshot_levels: Vec<usize>,
    pub inner: Vec<AcousticSolution>,
    pub layer: Vec<LayerProfile>,
    pub operator: BoundaryOperatorCoeffs,
    pub log: Vec<OrderLog>,
}

/// Physical data to characteristic variables with the wall frame at time `t`.
pub fn to_characteristic_field(bg: &BackgroundState, grid: &Grid, v: &StateField, t: f64) -> Result<StateField> {
    let frames = grid
        .x2()
        .iter()
        .map(|&y| Ok(eigen_frame(bg.alpha(y, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(v.map(|_, j, p| frames[j].to_characteristic(p)))
}

/// Characteristic data to physical variables with the wall frame at time `t`.
pub fn to_physical_field(bg: &BackgroundState, grid: &Grid, u: &StateField, t: f64) -> Result<StateField> {
    let frames = grid
        .x2()
        .iter()
        .map(|&y| Ok(eigen_frame(bg.alpha(y, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(u.map(|_, j, p| frames[j].from_characteristic(p)))
}

fn max_gap(a: f64, b: f64, acc: &mut f64) {
    *acc = acc.max((a - b).abs());
}

/// Builds `E⁰ … Eᴺ` and `B⁰ … Bᴺ` from initial data `u0` in characteristic variables.
pub fn build_expansion(cfg: &BuildConfig, u0: &StateField) -> Result<ExpansionSet> {
    let grid = cfg.grid.build()?;
    if !u0.matches(&grid) {
        return Err(Error::GridMismatch("initial data does not match the acoustic grid".into()));
    }
    let time = cfg.time;
    let levels = time.levels + 1;
    let level_times: Vec<f64> = (0..levels).map(|n| time.level_time(n)).collect();
    let x2 = grid.x2().to_vec();
    let n2 = grid.n2();
    let dt_layer = time.dt_layer();
    let sub = time.substeps;
    let prandtl = PrandtlCoefficients::sample(&cfg.bg, &cfg.scaling, &x2, &level_times)
        .map_err(|e| e.at_stage(0, "prandtl coefficients"))?
        .with_delta(0.0, grid.dx2());
    let operator = BoundaryOperatorCoeffs::sample(&cfg.bg, &cfg.scaling, &x2, &level_times)
        .map_err(|e| e.at_stage(0, "boundary operator"))?;
    let alpha = |n: usize, j: usize| operator.at(n, j).alpha;
    let mut acoustic = cfg.acoustic.clone();
    acoustic.snapshot_steps = cfg.snapshot_levels.iter().map(|&l| l * sub).collect();

    let mut problems: Vec<AcousticProblem> = Vec::new();
    let mut inner: Vec<AcousticSolution> = Vec::new();
    let mut layer: Vec<LayerProfile> = Vec::new();
    let mut log = Vec::new();

    for i in 0..=cfg.order {
        let clock = std::time::Instant::now();
        let mut entry = OrderLog {
            order: i,
            ..Default::default()
        };
        // (Bⁱ2, Bⁱ3) from the layer ODE; zero at order 0
        let b_ii = if i == 0 {
            LayerProfile::zeros(cfg.layer_grid, n2, dt_layer, levels)
        } else {
            let h = layer_ode_rhs(i, &operator, &layer).map_err(|e| e.at_stage(i, "layer ODE right-hand side"))?;
            solve_layer_ode(&h, &operator, &cfg.layer).map_err(|e| e.at_stage(i, "layer ODE"))?
        };
        // Eⁱ with E2 − E3 = −(Bⁱ2 − Bⁱ3) on the wall and source ΛEⁱ⁻²
        let wall = if i == 0 {
            BoundaryData::Zero
        } else {
            BoundaryData::Levels(LevelSeries {
                dt: dt_layer,
                values: (0..levels)
                    .map(|n| {
                        (0..n2)
                            .map(|j| {
                                let b = b_ii.at(n, 0, j);
                                -(b[2] - b[3])
                            })
                            .collect()
                    })
                    .collect(),
            })
        };
        let source = if i >= 2 {
            Source::Lambda(Box::new(problems[i - 2].clone()))
        } else {
            Source::None
        };
        let problem = AcousticProblem {
            bg: cfg.bg.clone(),
            scaling: cfg.scaling,
            init: if i == 0 { u0.clone() } else { StateField::zeros(&grid) },
            wall,
            far: BoundaryData::Zero,
            source,
        };
        let sol = solve_euler(&problem, &grid, &time, &acoustic).map_err(|e| e.at_stage(i, "inner problem"))?;
        entry.acoustic_bc = sol.bc_residual;
        // (Bⁱ0, Bⁱ1) from the Prandtl system
        let wall_data: Vec<Vec<[f64; 2]>> = (0..levels)
            .map(|n| {
                let tr = &sol.traces[n * sub];
                (0..n2)
                    .map(|j| {
                        let e = tr[j];
                        let b2 = b_ii.at(n, 0, j)[2];
                        [-e[0], -e[1] + 2f64.sqrt() * alpha(n, j) * (e[2] + b2)]
                    })
                    .collect()
            })
            .collect();
        let rhs = if i == 0 {
            None
        } else {
            Some(assemble_f(i, &operator, &layer, &b_ii).map_err(|e| e.at_stage(i, "Prandtl forcing"))?)
        };
        let b_i = solve_prandtl(&prandtl, rhs.as_ref(), &wall_data, &cfg.layer_grid, n2, dt_layer, &cfg.prandtl)
            .map_err(|e| e.at_stage(i, "Prandtl system"))?;
        let mut full = b_ii;
        for (dst, src) in full.levels.iter_mut().zip(&b_i.levels) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                d[0] = s[0];
                d[1] = s[1];
            }
        }
        for n in 0..levels {
            let tr = &sol.traces[n * sub];
            for j in 0..n2 {
                let (e, b) = (tr[j], full.at(n, 0, j));
                max_gap(b[0], -e[0], &mut entry.coupling_b0);
                max_gap(b[1] + e[1], 2f64.sqrt() * alpha(n, j) * (e[2] + b[2]), &mut entry.coupling_b1);
                max_gap(e[2] - e[3], -(b[2] - b[3]), &mut entry.coupling_ii);
            }
        }
        entry.initial_layer = full.levels[0].max_abs_all();
        if i == 0 {
            entry.b0_outgoing = full.levels.iter().map(|f| f.max_abs(2).max(f.max_abs(3))).fold(0.0, f64::max);
            if entry.b0_outgoing != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "B⁰2, B⁰3 must vanish, found {}",
                    entry.b0_outgoing
                ))
                .at_stage(0, "layer structure"));
            }
        }
        entry.tail = full.tail_max(&[0, 1, 2, 3]);
        entry.seconds = clock.elapsed().as_secs_f64();
        log::info!(
            "order {i}: couplings {:.3e} {:.3e} {:.3e}, tail {:.3e}, {:.1} s",
            entry.coupling_b0,
            entry.coupling_b1,
            entry.coupling_ii,
            entry.tail,
            entry.seconds
        );
        problems.push(problem);
        inner.push(sol);
        layer.push(full);
        log.push(entry);
    }
    Ok(ExpansionSet {
        order: cfg.order,
        bg: cfg.bg.clone(),
        scaling: cfg.scaling,
        grid,
        layer_grid: cfg.layer_grid,
        time,
        snapshot_levels: cfg.snapshot_levels.clone(),
        inner,
        layer,
        operator,
        log,
    })
}

/// Cubic Lagrange interpolation in `x1` from one node set onto another.
#[derive(Clone, Debug)]
pub struct X1Interp {
    stencils: Vec<(usize, [f64; 4])>,
}

impl X1Interp {
    pub fn new(src: &[f64], dst: &[f64]) -> Result<Self> {
        let n = src.len();
        if n < 4 {
            return Err(Error::InvalidInput("interpolation needs at least 4 source nodes".into()));
        }
        let (lo, hi) = (src[0], src[n - 1]);
        let stencils = dst
            .iter()
            .map(|&x| {
                if x < lo - 1e-12 || x > hi + 1e-12 {
                    return Err(Error::GridMismatch(format!("x1 = {x} lies outside [{lo}, {hi}]")));
                }
                let k = src.partition_point(|&s| s <= x).saturating_sub(1);
                let start = k.saturating_sub(1).min(n - 4);
                let mut w = [0.0; 4];
                for a in 0..4 {
                    let mut l = 1.0;
                    for b in 0..4 {
                        if a != b {
                            l *= (x - src[start + b]) / (src[start + a] - src[start + b]);
                        }
                    }
                    w[a] = l;
                }
                Ok((start, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stencils })
    }

    pub fn apply(&self, f: &StateField) -> StateField {
        let n2 = f.n2();
        let mut out = StateField::zeros_dims(self.stencils.len(), n2);
        for (i, (start, w)) in self.stencils.iter().enumerate() {
            for j in 0..n2 {
                let o = out.at_mut(i, j);
                for (a, wa) in w.iter().enumerate() {
                    let v = f.at(start + a, j);
                    for c in 0..4 {
                        o[c] += wa * v[c];
                    }
                }
            }
        }
        out
    }
}

/// One composed snapshot on a target grid.
#[derive(Clone, Debug)]
pub struct ApproximateSolution {
    pub epsilon: f64,
    pub t: f64,
    /// `W^ε` in characteristic variables.
    pub w: StateField,
    /// `Q⁻¹W^ε`.
    pub v: StateField,
    /// `K^ε = Q⁻¹W^ε − Q⁻¹E⁰`.
    pub k: StateField,
}

/// Composes `W^ε` at layer level `level` (which must carry a snapshot) on `target`.
///
/// Orders above `order` are ignored, so one expansion serves every `N ≤ order`.
pub fn compose(
    exp: &ExpansionSet,
    order: usize,
    epsilon: f64,
    level: usize,
    target: &Grid,
) -> Result<ApproximateSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if order > exp.order {
        return Err(Error::MissingPriorLayer { order: exp.order + 1 });
    }
    if target.n2() != exp.grid.n2() || (target.spec().x2_len - exp.grid.spec().x2_len).abs() > 1e-12 {
        return Err(Error::GridMismatch("composition needs the same x2 grid".into()));
    }
    let z_max = exp.layer_grid.z_max;
    if epsilon * z_max > target.spec().x1_max {
        log::warn!("layer support ε Z1max = {} exceeds the domain", epsilon * z_max);
    }
    let step = level * exp.time.substeps;
    let interp = X1Interp::new(exp.grid.x1(), target.x1())?;
    let t = exp.time.level_time(level);
    let mut w = StateField::zeros(target);
    let mut e0 = StateField::zeros(target);
    for i in 0..=order {
        let snap = exp.inner[i].snapshot_at(step).ok_or_else(|| {
            Error::InvalidInput(format!("no inner snapshot of order {i} at level {level}"))
        })?;
        let e = interp.apply(snap);
        if i == 0 {
            e0 = e.clone();
        }
        w.axpy(epsilon.powi(i as i32), &e);
        let b = &exp.layer[i];
        let f = epsilon.powi(i as i32);
        for (ii, &x1) in target.x1().iter().enumerate() {
            let z = x1 / epsilon;
            if z >= z_max {
                continue;
            }
            for j in 0..target.n2() {
                let s = b.sample_z_cubic(level, z, j);
                let o = w.at_mut(ii, j);
                for c in 0..4 {
                    o[c] += f * s[c];
                }
            }
        }
    }
    let v = to_physical_field(&exp.bg, target, &w, t)?;
    let mut k = v.clone();
    k.axpy(-1.0, &to_physical_field(&exp.bg, target, &e0, t)?);
    Ok(ApproximateSolution { epsilon, t, w, v, k })
}

/// Boundary traces and Cauchy data of the initial state that must vanish.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `max |v1|, |v2|, |θ|` on the wall.
    pub order0: f64,
    /// Same for `∂t V = −A0⁻¹(A1∂1V + A2∂2V)`.
    pub order1_inviscid: f64,
    /// Same for `A0⁻¹ D V / ε²`.
    pub order1_viscous: f64,
}

/// Wall traces of `V0` (physical variables) and of its first Cauchy datum.
pub fn compatibility_check(
    bg: &BackgroundState,
    scaling: &ViscosityScaling,
    grid: &Grid,
    v0: &StateField,
) -> Result<CompatibilityReport> {
    let d = Derivatives::new(grid);
    let mut r = CompatibilityReport::default();
    for (j, &y) in grid.x2().iter().enumerate() {
        let p = v0.at(0, j);
        r.order0 = r.order0.max(p[1].abs()).max(p[2].abs()).max(p[3].abs());
        let bj = bg.jets(0.0, y, 0.0)?;
        let a0 = bj.a0().value();
        let a0_inv = a0.try_inverse().ok_or_else(|| Error::InvalidInput("singular A0".into()))?;
        let (d1, d2) = (d.d1_at(v0, 0, j), d.d2_at(v0, 0, j));
        let f = mat_vec(&bj.a1().value(), &d1);
        let g = mat_vec(&bj.a2().value(), &d2);
        let dt = mat_vec(&a0_inv, &[0, 1, 2, 3].map(|c| -(f[c] + g[c])));
        r.order1_inviscid = r.order1_inviscid.max(dt[1].abs()).max(dt[2].abs()).max(dt[3].abs());
        let [k11, k12, k22] = bj.viscous_blocks(scaling).map(|m| m.value());
        let [i1, i2] = bj.coupling(scaling).map(|m| m.value());
        let (d11, d22) = (d.d11_at(v0, 0, j), d.d22_at(v0, 0, j));
        let d12 = {
            let jp = (j + 1) % grid.n2();
            let jm = (j + grid.n2() - 1) % grid.n2();
            let (a, b) = (d.d1_at(v0, 0, jp), d.d1_at(v0, 0, jm));
            [0, 1, 2, 3].map(|c| (a[c] - b[c]) / (2.0 * grid.dx2()))
        };
        let terms = [
            mat_vec(&k11, &d11),
            mat_vec(&(k12 * 2.0), &d12),
            mat_vec(&k22, &d22),
            mat_vec(&i1, &d1),
            mat_vec(&i2, &d2),
        ];
        let dv: [f64; 4] = [0, 1, 2, 3].map(|c| terms.iter().map(|t| t[c]).sum());
        let dvt = mat_vec(&a0_inv, &dv);
        r.order1_viscous = r.order1_viscous.max(dvt[1].abs()).max(dvt[2].abs()).max(dvt[3].abs());
    }
    Ok(r)
}

//! Computational grids: the truncated half plane, the stretched layer
//! coordinate and the shared time levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node distribution in `x1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// `x(ξ) = X (1 − tanh(β(1−ξ)) / tanh β)`, clustering nodes at the wall.
    Tanh { strength: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x1_max: f64,
    pub x2_len: f64,
    /// Number of cells in `x1` (there are `n1 + 1` nodes).
    pub n1: usize,
    /// Number of periodic nodes in `x2`.
    pub n2: usize,
    pub grading: Grading,
}

impl GridSpec {
    pub fn uniform(x1_max: f64, x2_len: f64, n1: usize, n2: usize) -> Self {
        Self {
            x1_max,
            x2_len,
            n1,
            n2,
            grading: Grading::Uniform,
        }
    }

    pub fn tanh(x1_max: f64, x2_len: f64, n1: usize, n2: usize, strength: f64) -> Self {
        Self {
            x1_max,
            x2_len,
            n1,
            n2,
            grading: Grading::Tanh { strength },
        }
    }

    /// Chooses the tanh strength so that the first cell is `epsilon / cells_per_eps`
    /// wide; falls back to a uniform grid when that is already fine enough.
    pub fn graded_for(
        x1_max: f64,
        x2_len: f64,
        n1: usize,
        n2: usize,
        epsilon: f64,
        cells_per_eps: f64,
    ) -> Result<Self> {
        let target = epsilon / cells_per_eps;
        let uniform = x1_max / n1 as f64;
        if uniform <= target {
            return Ok(Self::uniform(x1_max, x2_len, n1, n2));
        }
        let first = |beta: f64| map(x1_max, beta, 1.0 / n1 as f64).0;
        let (mut lo, mut hi) = (1e-6, 1.0);
        while first(hi) > target {
            hi *= 2.0;
            if hi > 50.0 {
                return Err(Error::InvalidInput(format!(
                    "cannot reach first cell {target} with {n1} cells on [0, {x1_max}]"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if first(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self::tanh(x1_max, x2_len, n1, n2, hi))
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(*self)
    }
}

/// Returns `(x, dx/dξ, d²x/dξ²)` of the tanh map.
fn map(x1_max: f64, beta: f64, xi: f64) -> (f64, f64, f64) {
    let tb = beta.tanh();
    let u = beta * (1.0 - xi);
    let th = u.tanh();
    let sech2 = 1.0 - th * th;
    (
        x1_max * (1.0 - th / tb),
        x1_max * beta * sech2 / tb,
        x1_max * 2.0 * beta * beta * sech2 * th / tb,
    )
}

/// Mapped tensor grid on `[0, X1max] × [0, X2len)`, periodic in `x2`.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    x1: Vec<f64>,
    jac: Vec<f64>,
    jac_xi: Vec<f64>,
    dxi: f64,
    x2: Vec<f64>,
    dx2: f64,
    weight1: Vec<f64>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if spec.n1 < 4 || spec.n2 < 4 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 4 cells per direction, got {} x {}",
                spec.n1, spec.n2
            )));
        }
        if !(spec.x1_max > 0.0) || !(spec.x2_len > 0.0) {
            return Err(Error::InvalidInput("grid extents must be positive".into()));
        }
        let n = spec.n1;
        let dxi = 1.0 / n as f64;
        let mut x1 = Vec::with_capacity(n + 1);
        let mut jac = Vec::with_capacity(n + 1);
        let mut jac_xi = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let xi = i as f64 * dxi;
            let (x, j, jx) = match spec.grading {
                Grading::Uniform => (spec.x1_max * xi, spec.x1_max, 0.0),
                Grading::Tanh { strength } => {
                    if !(strength > 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "tanh strength must be positive, got {strength}"
                        )));
                    }
                    map(spec.x1_max, strength, xi)
                }
            };
            x1.push(x);
            jac.push(j);
            jac_xi.push(jx);
        }
        x1[0] = 0.0;
        x1[n] = spec.x1_max;
        if x1.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("x1 coordinates are not increasing".into()));
        }
        let dx2 = spec.x2_len / spec.n2 as f64;
        let x2 = (0..spec.n2).map(|j| j as f64 * dx2).collect();
        let weight1 = (0..=n)
            .map(|i| {
                let h = if i == 0 || i == n { 0.5 } else { 1.0 };
                h * dxi * jac[i]
            })
            .collect();
        Ok(Self {
            spec,
            x1,
            jac,
            jac_xi,
            dxi,
            x2,
            dx2,
            weight1,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Number of `x1` nodes.
    pub fn n1(&self) -> usize {
        self.x1.len()
    }

    pub fn n2(&self) -> usize {
        self.x2.len()
    }

    pub fn len(&self) -> usize {
        self.n1() * self.n2()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.x2.len() + j
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    /// `dx1/dξ` at the nodes.
    pub fn jac(&self) -> &[f64] {
        &self.jac
    }

    pub fn jac_xi(&self) -> &[f64] {
        &self.jac_xi
    }

    pub fn dxi(&self) -> f64 {
        self.dxi
    }

    pub fn dx2(&self) -> f64 {
        self.dx2
    }

    /// Trapezoid weights in `x1` (the diagonal SBP norm times the metric).
    pub fn weight1(&self) -> &[f64] {
        &self.weight1
    }

    pub fn dx1_min(&self) -> f64 {
        self.x1.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Number of cells lying entirely inside `x1 < width`.
    pub fn cells_within(&self, width: f64) -> usize {
        self.x1.windows(2).filter(|w| w[1] <= width * (1.0 + 1e-12)).count()
    }

    pub fn check_layer_resolution(&self, epsilon: f64) -> Result<()> {
        let cells = self.cells_within(epsilon);
        if cells < 8 {
            return Err(Error::GridTooCoarseForLayer { cells, epsilon });
        }
        Ok(())
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.spec == other.spec
    }
}

/// Uniform grid in the stretched normal coordinate `z1 ∈ [0, Z1max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrid {
    pub z_max: f64,
    /// Number of cells; there are `nz + 1` nodes.
    pub nz: usize,
}

impl LayerGrid {
    pub fn new(z_max: f64, nz: usize) -> Result<Self> {
        if !(z_max > 0.0) || nz < 4 {
            return Err(Error::InvalidInput(format!(
                "layer grid needs Z1max > 0 and at least 4 cells, got {z_max}, {nz}"
            )));
        }
        Ok(Self { z_max, nz })
    }

    pub fn with_spacing(z_max: f64, dz: f64) -> Result<Self> {
        Self::new(z_max, (z_max / dz).round().max(4.0) as usize)
    }

    pub fn dz(&self) -> f64 {
        self.z_max / self.nz as f64
    }

    pub fn nodes(&self) -> usize {
        self.nz + 1
    }

    pub fn z(&self, k: usize) -> f64 {
        k as f64 * self.dz()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.z(k)).collect()
    }
}

/// Shared time levels: layers live on `levels + 1` levels of width
/// `dt_layer`, and each level is split into `substeps` explicit steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub levels: usize,
    pub substeps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, levels: usize, substeps: usize) -> Result<Self> {
        if !(t_end > 0.0) || levels == 0 || substeps == 0 {
            return Err(Error::InvalidInput(format!(
                "time grid needs T > 0 and positive counts, got {t_end}, {levels}, {substeps}"
            )));
        }
        Ok(Self {
            t_end,
            levels,
            substeps,
        })
    }

    /// Smallest number of levels whose explicit step does not exceed `dt_max`.
    pub fn fitted(t_end: f64, dt_max: f64, substeps: usize) -> Result<Self> {
        let levels = (t_end / (dt_max * substeps as f64) - 1e-9).ceil().max(1.0) as usize;
        Self::new(t_end, levels, substeps)
    }

    pub fn dt_layer(&self) -> f64 {
        self.t_end / self.levels as f64
    }

    pub fn dt(&self) -> f64 {
        self.dt_layer() / self.substeps as f64
    }

    pub fn steps(&self) -> usize {
        self.levels * self.substeps
    }

    pub fn level_time(&self, n: usize) -> f64 {
        n as f64 * self.dt_layer()
    }

    pub fn step_time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

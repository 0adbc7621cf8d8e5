//! Run configuration: flat `section.key = value` text or the equivalent JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use nsf_layers::grid::{GridSpec, LayerGrid};
use nsf_layers::{BackgroundState, EquationOfState, ViscosityScaling};

/// Largest expansion order accepted without `order_cap` being raised.
pub const DEFAULT_ORDER_CAP: usize = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub mu_bar: f64,
    pub lambda_bar: f64,
    pub kappa_bar: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            mu_bar: 1.0,
            lambda_bar: 0.0,
            kappa_bar: 1.0,
        }
    }
}

/// Reference grid, graded per ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x1_max: f64,
    pub x2_len: f64,
    pub n1: usize,
    pub n2: usize,
    /// Cells across the first `ε` of the wall.
    pub cells_per_eps: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x1_max: 2.5,
            x2_len: 2.0,
            n1: 512,
            n2: 128,
            cells_per_eps: 16.0,
        }
    }
}

/// Uniform grid of the inner (Euler) terms; shares `x1_max`, `x2_len`, `n2` with `grid`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticConfig {
    pub n1: usize,
    pub cfl: f64,
    /// Acoustic steps per layer time level.
    pub substeps: usize,
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            n1: 1000,
            cfl: 0.9,
            substeps: 2,
            sponge_fraction: 0.1,
            sponge_strength: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    pub z_max: f64,
    pub dz: f64,
    pub tail_tol: f64,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            z_max: 12.0,
            dz: 0.05,
            tail_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    /// Snapshots are compared at `k T / intervals`.
    pub intervals: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_end: 0.5,
            intervals: 20,
        }
    }
}

/// Density pulse `a b(x1) (1 + m cos(2πk x2 / X2len))` with `b = (1 − s²)⁴`,
/// `s = (x1 − centre) / half_width`; velocity and temperature start at rest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub centre: f64,
    pub half_width: f64,
    pub amplitude: f64,
    pub modulation: f64,
    pub mode: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            centre: 0.4,
            half_width: 0.3,
            amplitude: 1.0,
            modulation: 0.5,
            mode: 1.0,
        }
    }
}

impl PulseConfig {
    pub fn eval(&self, x1: f64, x2: f64, x2_len: f64) -> [f64; 4] {
        let s = (x1 - self.centre) / self.half_width;
        let b = if s.abs() >= 1.0 { 0.0 } else { (1.0 - s * s).powi(4) };
        let m = 1.0 + self.modulation * (2.0 * std::f64::consts::PI * self.mode * x2 / x2_len).cos();
        [self.amplitude * b * m, 0.0, 0.0, 0.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub cfl: f64,
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            cfl: 0.8,
            sponge_fraction: 0.1,
            sponge_strength: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolConfig {
    /// Solver tolerance the boundary couplings are held to (10× this).
    pub bc_tol: f64,
    pub compat_tol: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        Self {
            bc_tol: 1e-10,
            compat_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Flips the sign of `τ0` in the Prandtl manufactured test (negative control).
    pub flip_tau0: bool,
    pub random_alphas: usize,
    pub interpolation_fields: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            flip_tau0: false,
            random_alphas: 1000,
            interpolation_fields: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub background: NamedSpec,
    pub eos: NamedSpec,
    pub scaling: ScalingConfig,
    pub grid: GridConfig,
    pub acoustic: AcousticConfig,
    pub layer: LayerConfig,
    pub time: TimeConfig,
    pub init: PulseConfig,
    pub reference: ReferenceConfig,
    pub tol: TolConfig,
    pub verify: VerifyConfig,
    pub epsilons: Vec<f64>,
    pub order: usize,
    pub order_cap: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            background: NamedSpec {
                name: "constant".into(),
                params: vec![1.0, 0.0, 0.0, 1.0],
            },
            eos: NamedSpec {
                name: "ideal".into(),
                params: Vec::new(),
            },
            scaling: ScalingConfig::default(),
            grid: GridConfig::default(),
            acoustic: AcousticConfig::default(),
            layer: LayerConfig::default(),
            time: TimeConfig::default(),
            init: PulseConfig::default(),
            reference: ReferenceConfig::default(),
            tol: TolConfig::default(),
            verify: VerifyConfig::default(),
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            order: 2,
            order_cap: DEFAULT_ORDER_CAP,
            out: PathBuf::from("nsf-out"),
            seed: 2024,
        }
    }
}

impl RunConfig {
    /// Parses either format; text starting with `{` is read as JSON.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.epsilons.is_empty() {
            return bad("epsilons is empty".into());
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return bad(format!("epsilon {e} is outside (0, 1)"));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("epsilons must be strictly decreasing".into());
        }
        if self.order > self.order_cap {
            return bad(format!("order {} exceeds the cap {}", self.order, self.order_cap));
        }
        if self.time.intervals == 0 || !(self.time.t_end > 0.0) {
            return bad("time.t_end and time.intervals must be positive".into());
        }
        if self.acoustic.substeps == 0 {
            return bad("acoustic.substeps must be positive".into());
        }
        self.background_state().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scaling_for(self.epsilons[0])
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.acoustic_grid()
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.layer_grid().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn equation_of_state(&self) -> nsf_layers::Result<EquationOfState> {
        EquationOfState::from_name(&self.eos.name, &self.eos.params)
    }

    pub fn background_state(&self) -> nsf_layers::Result<BackgroundState> {
        BackgroundState::from_name(&self.background.name, &self.background.params, self.equation_of_state()?)
    }

    pub fn scaling_for(&self, epsilon: f64) -> nsf_layers::Result<ViscosityScaling> {
        let s = self.scaling;
        ViscosityScaling::new(s.mu_bar, s.lambda_bar, s.kappa_bar, epsilon)
    }

    pub fn acoustic_grid(&self) -> GridSpec {
        let g = self.grid;
        GridSpec::uniform(g.x1_max, g.x2_len, self.acoustic.n1, g.n2)
    }

    pub fn reference_grid(&self, epsilon: f64) -> nsf_layers::Result<GridSpec> {
        let g = self.grid;
        GridSpec::graded_for(g.x1_max, g.x2_len, g.n1, g.n2, epsilon, g.cells_per_eps)
    }

    pub fn layer_grid(&self) -> nsf_layers::Result<LayerGrid> {
        LayerGrid::with_spacing(self.layer.z_max, self.layer.dz)
    }

    /// Canonical JSON of the whole config; the hash input.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Flat dotted text form, readable by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.join("\n") + "\n"
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => {
            let text = toml::Value::try_from(other).map(|t| t.to_string()).unwrap_or_default();
            out.push(format!("{prefix} = {text}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_text_sets_nested_fields() {
        let cfg = RunConfig::parse(
            "grid.n1 = 256\nepsilons = [0.2, 0.1, 0.05]\norder = 1\nbackground.name = \"constant\"\n\
             background.params = [2.0, 0.0, 0.0, 1.0]\nverify.flip_tau0 = true\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.n1, 256);
        assert_eq!(cfg.grid.n2, 128);
        assert_eq!(cfg.order, 1);
        assert_eq!(cfg.background.params[0], 2.0);
        assert!(cfg.verify.flip_tau0);
    }

    #[test]
    fn json_mirror_is_interchangeable() {
        let cfg = RunConfig {
            order: 1,
            epsilons: vec![0.3, 0.15],
            ..Default::default()
        };
        let from_json = RunConfig::parse(&serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let from_text = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(from_json, cfg);
        assert_eq!(from_text, cfg);
        assert_eq!(from_text.hash(), cfg.hash());
    }

    #[test]
    fn empty_epsilons_is_a_config_error() {
        let err = RunConfig::parse("epsilons = []").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "epsilons = [1.5]",
            "epsilons = [0.1, 0.2]",
            "order = 4",
            "background.name = \"vortex\"",
            "eos.name = \"stiffened\"",
            "scaling.mu_bar = 0.0",
            "grid.unknown = 1",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
        assert!(RunConfig::parse("order = 4\norder_cap = 4").is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn pulse_is_compact_and_clear_of_the_wall() {
        let p = PulseConfig::default();
        assert_eq!(p.eval(0.0, 0.3, 2.0), [0.0; 4]);
        assert_eq!(p.eval(0.09, 0.3, 2.0), [0.0; 4]);
        assert_eq!(p.eval(0.71, 0.3, 2.0), [0.0; 4]);
        assert!((p.eval(0.4, 0.0, 2.0)[0] - 1.5).abs() < 1e-15);
        assert!((p.eval(0.4, 1.0, 2.0)[0] - 0.5).abs() < 1e-15);
    }
}

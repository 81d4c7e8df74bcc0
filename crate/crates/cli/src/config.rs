//! Run configuration: a TOML file with nested blocks, strictly validated
//! (unknown keys rejected, all missing required keys reported at once),
//! with dotted-path command-line overrides.

use delam_core::{
    build_rect_mesh, AdhesiveLaw, LoadProgram, MaterialKV, MeshLayout, Problem, QpOptions,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: missing required keys: {keys}")]
    MissingKeys { path: String, keys: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("override '{0}' is not of the form key.path=value")]
    BadOverride(String),
    #[error("mode '{actual}' does not match the '{subcommand}' subcommand (expected {expected})")]
    ModeMismatch {
        actual: String,
        subcommand: String,
        expected: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Slider,
    Mesh2d,
    Sweep,
    Adaptive,
    Oracle,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Slider => "slider",
            Mode::Mesh2d => "mesh2d",
            Mode::Sweep => "sweep",
            Mode::Adaptive => "adaptive",
            Mode::Oracle => "oracle",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKey {
    Slider,
    Exp2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub length: f64,
    pub height: f64,
    pub contact_length: f64,
    pub nx: usize,
    pub ny: usize,
    pub layout: LayoutKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBlock {
    /// Young modulus, Pa.
    pub young: f64,
    /// Poisson ratio.
    pub poisson: f64,
    /// Kelvin-Voigt relaxation time, s.
    pub chi: f64,
    #[serde(default)]
    pub plane_stress: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdhesiveBlock {
    /// Normal interface stiffness, Pa/m.
    pub k_n: f64,
    /// Tangential interface stiffness, Pa/m.
    pub k_t: f64,
    /// Fracture toughness, J/m^2.
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingBlock {
    /// Dirichlet ramp velocity, m/s.
    pub velocity: [f64; 2],
    /// Time horizon, s.
    pub horizon: f64,
    #[serde(default)]
    pub bulk_force: [f64; 2],
    #[serde(default)]
    pub surface_force: [f64; 2],
}

fn default_qp_tol() -> f64 {
    1e-10
}
fn default_qp_max_iterations() -> usize {
    100
}
fn default_energy_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    /// Time step, s.
    pub tau: f64,
    #[serde(default = "default_qp_tol")]
    pub qp_tol: f64,
    #[serde(default = "default_qp_max_iterations")]
    pub qp_max_iterations: usize,
    /// Tolerance on the certified energy residual, relative to the stored
    /// energy scale; a run exceeding it is a numerical failure.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_max_tau_halvings() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverBlock {
    pub chi0: f64,
    pub tau0: f64,
    pub chi_final: f64,
    /// Omit to calibrate from the pilot run at (chi0, tau0).
    #[serde(default)]
    pub gate_c: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_tau_halvings")]
    pub max_tau_halvings: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Viscosities to sweep; zero allowed.
    pub chis: Vec<f64>,
    pub taus: Vec<f64>,
}

fn default_snapshot_stride() -> usize {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    /// Write a field snapshot every this many steps (0: final state only).
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub geometry: GeometryBlock,
    pub material: MaterialBlock,
    pub adhesive: AdhesiveBlock,
    pub loading: LoadingBlock,
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub driver: Option<DriverBlock>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    pub output: OutputBlock,
}

/// Required leaf keys, checked up front so one error lists all gaps.
const REQUIRED_KEYS: &[&str] = &[
    "mode",
    "geometry.length",
    "geometry.height",
    "geometry.contact_length",
    "geometry.nx",
    "geometry.ny",
    "geometry.layout",
    "material.young",
    "material.poisson",
    "material.chi",
    "adhesive.k_n",
    "adhesive.k_t",
    "adhesive.alpha",
    "loading.velocity",
    "loading.horizon",
    "numerics.tau",
    "output.directory",
];

fn lookup<'v>(value: &'v toml::Value, path: &str) -> Option<&'v toml::Value> {
    let mut cur = value;
    for part in path.split('.') {
        cur = cur.get(part)?;
    }
    Some(cur)
}

fn missing_keys(value: &toml::Value, mode: Option<Mode>) -> Vec<&'static str> {
    let mut missing: Vec<&'static str> = REQUIRED_KEYS
        .iter()
        .filter(|k| lookup(value, k).is_none())
        .copied()
        .collect();
    match mode {
        Some(Mode::Adaptive) => {
            for k in ["driver.chi0", "driver.tau0", "driver.chi_final"] {
                if lookup(value, k).is_none() {
                    missing.push(k);
                }
            }
        }
        Some(Mode::Sweep) => {
            for k in ["sweep.chis", "sweep.taus"] {
                if lookup(value, k).is_none() {
                    missing.push(k);
                }
            }
        }
        _ => {}
    }
    missing
}

/// Applies `key.path=value` to the TOML tree; the value text is parsed as a
/// TOML literal (numbers, booleans, arrays, strings).
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (path, text) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let parsed: toml::Value = format!("x = {text}")
        .parse::<toml::Table>()
        .map_err(|_| ConfigError::BadOverride(spec.to_string()))?
        .remove("x")
        .expect("key x was just parsed");
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        if cur.get(part).is_none() {
            cur.as_table_mut()
                .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?
                .insert(part.to_string(), toml::Value::Table(Default::default()));
        }
        cur = cur.get_mut(part).expect("just inserted");
    }
    cur.as_table_mut()
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Parses and fully validates a config file, applying overrides first.
/// Returns the validated config together with the effective TOML tree
/// (for the provenance echo).
pub fn parse_config(
    path: &str,
    overrides: &[String],
) -> Result<(RunConfig, toml::Value), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_string(),
        source,
    })?;
    parse_config_str(&text, path, overrides)
}

pub fn parse_config_str(
    text: &str,
    path: &str,
    overrides: &[String],
) -> Result<(RunConfig, toml::Value), ConfigError> {
    let mut tree: toml::Value = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    for spec in overrides {
        apply_override(&mut tree, spec)?;
    }
    let mode = lookup(&tree, "mode")
        .and_then(|v| v.as_str())
        .and_then(|s| match s {
            "slider" => Some(Mode::Slider),
            "mesh2d" => Some(Mode::Mesh2d),
            "sweep" => Some(Mode::Sweep),
            "adaptive" => Some(Mode::Adaptive),
            "oracle" => Some(Mode::Oracle),
            _ => None,
        });
    let missing = missing_keys(&tree, mode);
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys {
            path: path.to_string(),
            keys: missing.join(", "),
        });
    }
    let config: RunConfig =
        RunConfig::deserialize(tree.clone()).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
    validate(&config).map_err(|message| ConfigError::Invalid {
        path: path.to_string(),
        message,
    })?;
    Ok((config, tree))
}

fn validate(config: &RunConfig) -> Result<(), String> {
    let g = &config.geometry;
    if !(g.length > 0.0 && g.height > 0.0 && g.contact_length > 0.0) {
        return Err("geometry dimensions must be positive".into());
    }
    if g.contact_length > g.length {
        return Err(format!(
            "geometry.contact_length {} exceeds geometry.length {}",
            g.contact_length, g.length
        ));
    }
    if g.nx == 0 || g.ny == 0 {
        return Err("geometry.nx and geometry.ny must be at least 1".into());
    }
    let m = &config.material;
    if !(m.young > 0.0) {
        return Err("material.young must be positive".into());
    }
    if !(0.0..0.5).contains(&m.poisson) {
        return Err("material.poisson must lie in [0, 0.5)".into());
    }
    if !(m.chi >= 0.0) {
        return Err("material.chi must be nonnegative".into());
    }
    let a = &config.adhesive;
    if !(a.k_n > 0.0 && a.k_t > 0.0 && a.alpha > 0.0) {
        return Err("adhesive.k_n, adhesive.k_t, adhesive.alpha must be positive".into());
    }
    if !(config.loading.horizon > 0.0) {
        return Err("loading.horizon must be positive".into());
    }
    let n = &config.numerics;
    if !(n.tau > 0.0) {
        return Err("numerics.tau must be positive".into());
    }
    if !(n.tau <= config.loading.horizon) {
        return Err("numerics.tau must not exceed loading.horizon".into());
    }
    if !(n.qp_tol > 0.0 && n.energy_tol > 0.0) {
        return Err("numerics.qp_tol and numerics.energy_tol must be positive".into());
    }
    if config.mode == Mode::Adaptive {
        let d = config.driver.as_ref().expect("checked by missing_keys");
        if !(d.chi0 > d.chi_final && d.chi_final > 0.0) {
            return Err("driver requires chi0 > chi_final > 0".into());
        }
        if !(d.tau0 > 0.0 && d.gamma > 0.0) {
            return Err("driver.tau0 and driver.gamma must be positive".into());
        }
        if let Some(c) = d.gate_c {
            if !(c > 0.0) {
                return Err("driver.gate_c must be positive".into());
            }
        }
    }
    if config.mode == Mode::Sweep {
        let s = config.sweep.as_ref().expect("checked by missing_keys");
        if s.chis.is_empty() || s.taus.is_empty() {
            return Err("sweep.chis and sweep.taus must be nonempty".into());
        }
        if s.chis.iter().any(|&c| c < 0.0) || s.taus.iter().any(|&t| t <= 0.0) {
            return Err("sweep.chis must be nonnegative, sweep.taus positive".into());
        }
    }
    if config.output.directory.is_empty() {
        return Err("output.directory must not be empty".into());
    }
    Ok(())
}

impl RunConfig {
    pub fn build_problem(&self) -> Result<Problem, String> {
        let layout = match self.geometry.layout {
            LayoutKey::Slider => MeshLayout::Slider,
            LayoutKey::Exp2d => MeshLayout::Exp2d,
        };
        let mesh = build_rect_mesh(
            self.geometry.length,
            self.geometry.height,
            self.geometry.contact_length,
            self.geometry.nx,
            self.geometry.ny,
            layout,
        )
        .map_err(|e| e.to_string())?;
        let material = MaterialKV::new(self.material.young, self.material.poisson, self.material.chi)
            .map_err(|e| e.to_string())?
            .with_plane_stress(self.material.plane_stress);
        let adhesive = AdhesiveLaw::uniform(self.adhesive.k_n, self.adhesive.k_t, self.adhesive.alpha)
            .map_err(|e| e.to_string())?;
        let mut load = LoadProgram::dirichlet_ramp(self.loading.velocity, self.loading.horizon)
            .map_err(|e| e.to_string())?;
        load.bulk_force = self.loading.bulk_force;
        load.surface_force = self.loading.surface_force;
        Problem::new(mesh, material, adhesive, load).map_err(|e| e.to_string())
    }

    pub fn qp_options(&self) -> QpOptions {
        QpOptions {
            tol: self.numerics.qp_tol,
            max_iterations: self.numerics.qp_max_iterations,
        }
    }
}

//! Scenario files: versioned JSON describing a grid, a potential and per-pipeline settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nsadisp::evolution::Method;
use nsadisp::potentials::{builtin_potential, PotentialSpec};
use nsadisp::{make_grid, Grid, GridFunction, GridMode, C64};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const SCHEMA: &str = "nsadisp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pipeline {
    Threshold,
    Inverse,
    Evolve,
    Ftscan,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub mode: GridMode,
    pub extent: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// builtin family name
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    /// JSON file holding [[re, im], ...] nodal values, relative to the scenario file
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_rank: f64,
    pub tol_res: f64,
    pub cond_max: f64,
    pub tol_imag: f64,
    pub tol_cluster: f64,
    /// bound on the S0 one-sided-inverse and range residuals
    pub tol_identity: f64,
    pub tol_pairing: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_rank: nsadisp::threshold::TOL_RANK,
            tol_res: nsadisp::threshold::TOL_RES,
            cond_max: nsadisp::birman_schwinger::COND_MAX,
            tol_imag: 0.2,
            tol_cluster: 1e-5,
            tol_identity: 1e-9,
            tol_pairing: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub bump_width: f64,
    pub t_min: f64,
    pub count: usize,
    pub t_fit_min: f64,
    /// defaults to the reflection horizon of the grid
    pub t_max: Option<f64>,
    pub project: bool,
    pub method: Method,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { bump_width: 1.2, t_min: 0.25, count: 24, t_fit_min: 2.0, t_max: None, project: true, method: Method::ExpmSquaring }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    /// defaults to a geometric scan up to the validity window
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowKind {
    High,
    Mid,
    Low,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtConfig {
    pub window: WindowKind,
    pub n: usize,
    /// LOW window radius; defaults to half the low-energy validity window
    pub r: Option<f64>,
    pub lambda1: f64,
    /// zero padding of the lambda grid beyond the window support
    pub padding: f64,
    pub project: bool,
}

impl Default for FtConfig {
    fn default() -> Self {
        Self { window: WindowKind::Low, n: 64, r: None, lambda1: 2.0, padding: 1.0, project: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<Pipeline>,
    pub grid: GridSpec,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub invert: InvertConfig,
    #[serde(default)]
    pub ftscan: FtConfig,
    /// directory of the scenario file, for resolving sample paths
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut s: Scenario =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::Config(format!("schema {:?} is not {SCHEMA:?}", self.schema)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_rank", t.tol_rank),
            ("tol_res", t.tol_res),
            ("cond_max", t.cond_max),
            ("tol_imag", t.tol_imag),
            ("tol_cluster", t.tol_cluster),
            ("tol_identity", t.tol_identity),
            ("tol_pairing", t.tol_pairing),
        ] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        match (&self.potential.name, &self.potential.samples) {
            (Some(_), None) => {}
            (None, Some(p)) => {
                let full = self.base_dir.join(p);
                if !full.exists() {
                    return Err(CliError::Config(format!("sample file {} does not exist", full.display())));
                }
            }
            _ => return Err(CliError::Config("potential needs exactly one of name or samples".into())),
        }
        Ok(())
    }

    pub fn build_grid(&self, scale: usize) -> Result<Arc<Grid>, CliError> {
        make_grid(self.grid.mode, self.grid.extent, self.grid.nodes * scale).map_err(CliError::from)
    }

    pub fn build_potential(&self, grid: &Arc<Grid>) -> Result<PotentialSpec, CliError> {
        if let Some(name) = &self.potential.name {
            return builtin_potential(name, &self.potential.params, grid).map_err(CliError::from);
        }
        let path = self.base_dir.join(self.potential.samples.as_ref().expect("validated"));
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let pairs: Vec<(f64, f64)> =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if pairs.len() != grid.len() {
            return Err(CliError::Config(format!("{} samples for a grid of {} nodes", pairs.len(), grid.len())));
        }
        let values = GridFunction::new(grid, pairs.into_iter().map(|(a, b)| C64::new(a, b)).collect())?;
        PotentialSpec::from_function(&path.display().to_string(), values).map_err(CliError::from)
    }
}

fn builtin(name: &str, params: Value, extent: f64, nodes: usize) -> Scenario {
    Scenario {
        schema: SCHEMA.into(),
        pipeline: None,
        grid: GridSpec { mode: GridMode::RadialSwave, extent, nodes },
        potential: PotentialConfig {
            name: Some(name.into()),
            params: params.as_object().cloned().unwrap_or_default(),
            samples: None,
        },
        tolerances: Tolerances::default(),
        evolve: EvolveConfig::default(),
        invert: InvertConfig::default(),
        ftscan: FtConfig::default(),
        base_dir: PathBuf::new(),
    }
}

/// The scenario files emitted by `nsadisp fixtures`.
pub fn builtin_scenarios() -> Vec<(&'static str, Scenario)> {
    let mut free = builtin("zero", Value::Null, 40.0, 800);
    free.evolve.project = false;
    free.pipeline = Some(Pipeline::Evolve);
    let mut eigen = builtin("exact_eigen", serde_json::json!({ "s": 2.0 }), 120.0, 1200);
    eigen.pipeline = Some(Pipeline::Full);
    eigen.evolve.t_fit_min = 4.0;
    eigen.evolve.t_max = Some(14.0);
    eigen.evolve.method = Method::EigenDecomp;
    let mut fast = builtin("exact_eigen", serde_json::json!({ "s": 4.0 }), 10.0, 200);
    fast.pipeline = Some(Pipeline::Inverse);
    let mut cw = builtin("complex_well", serde_json::json!({ "depth": 6.0, "gamma": 1.5, "width": 1.0 }), 40.0, 400);
    cw.pipeline = Some(Pipeline::Evolve);
    let mut well = builtin("gaussian_well", serde_json::json!({ "depth": 1.0, "width": 1.0 }), 20.0, 200);
    well.pipeline = Some(Pipeline::Threshold);
    let mut res = builtin("zero_resonance", Value::Null, 40.0, 400);
    res.pipeline = Some(Pipeline::Threshold);
    vec![
        ("free.json", free),
        ("exact_eigen.json", eigen),
        ("exact_eigen_small.json", fast),
        ("complex_well.json", cw),
        ("gaussian_well.json", well),
        ("zero_resonance.json", res),
    ]
}

//! Run configuration: one strict JSON document.
//!
//! Every block is optional. Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `model` | [`ModelConfig::default`]: `N = 16`, `M = 4N = 64`, `dt = 1e-3`, `γ = 0.1` |
//! | `shape` | gaussian-bump at `[0.5, 0.1]` with the family's default box |
//! | `control` | `{"radius": 10, "init": "zeros"}` |
//! | `optimizer` | [`OptimConfig::default`] |
//! | `initial_condition` | `{"modal": {"q": [1.0], "v": []}}`, i.e. `w₀ = sin πx` |
//! | `sweep` | `{"params": [0], "grid_sizes": [33]}` |
//! | `gradcheck` | `{"epsilon": 1e-5, "seed": 0, "directions": 8, "full": false, "control_perturbation": 1.0}` |
//! | `output_dir` | `"railopt-out"` |
//!
//! Unknown keys anywhere are rejected. File paths are taken relative to the
//! directory holding the config.
//!
//! Control files are CSV `t,u` with one row per time node. Grid files for
//! the initial condition are CSV `x,w,v` sampled on the interior quadrature
//! nodes `x_j = j/M`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forward::{ControlSignal, TimeGrid};
use crate::model::{DiscreteModel, ModelConfig, StateVector};
use crate::optimize::{AdmissibleSets, OptimConfig};
use crate::oracle::FD_EPSILON;
use crate::shape::{ShapeFamily, ShapeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub optimizer: OptimConfig,
    #[serde(default)]
    pub initial_condition: InitialCondition,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub gradcheck: GradCheckSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("railopt-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            shape: ShapeSpec::default(),
            control: ControlSpec::default(),
            optimizer: OptimConfig::default(),
            initial_condition: InitialCondition::default(),
            sweep: SweepSpec::default(),
            gradcheck: GradCheckSpec::default(),
            output_dir: default_output_dir(),
            base_dir: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    #[serde(default = "default_family")]
    pub family: ShapeFamily,
    /// Starting parameters; required for splines.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// `[lo, hi]` per parameter; the family default when absent.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

fn default_family() -> ShapeFamily {
    ShapeFamily::GaussianBump
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            family: default_family(),
            values: None,
            bounds: None,
        }
    }
}

impl ShapeSpec {
    pub fn build(&self) -> Result<ShapeParams> {
        let values = match (&self.values, self.family.default_values()) {
            (Some(v), _) => v.clone(),
            (None, Some(v)) => v,
            (None, None) => {
                return Err(Error::InvalidConfig(format!(
                    "shape.values is required for family {}",
                    self.family
                )))
            }
        };
        let bounds = self
            .bounds
            .clone()
            .unwrap_or_else(|| self.family.default_bounds(values.len()));
        ShapeParams::new(self.family, values, bounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlInit {
    Zeros,
    Constant(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// `R₁`.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_control_init")]
    pub init: ControlInit,
}

fn default_radius() -> f64 {
    10.0
}

fn default_control_init() -> ControlInit {
    ControlInit::Zeros
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            radius: default_radius(),
            init: default_control_init(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalCoefficients {
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Leading modal coefficients; missing modes are zero.
    Modal(ModalCoefficients),
    GridFile(PathBuf),
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Modal(ModalCoefficients {
            q: vec![1.0],
            v: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Indices into the shape parameter vector.
    #[serde(default = "default_sweep_params")]
    pub params: Vec<usize>,
    #[serde(default = "default_sweep_sizes")]
    pub grid_sizes: Vec<usize>,
}

fn default_sweep_params() -> Vec<usize> {
    vec![0]
}

fn default_sweep_sizes() -> Vec<usize> {
    vec![33]
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            params: default_sweep_params(),
            grid_sizes: default_sweep_sizes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random control directions to probe.
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Also difference every control node (one pair of solves per node).
    #[serde(default)]
    pub full: bool,
    /// Sup amplitude of a seeded smooth signal added to the configured
    /// control before checking, so the default instance has a nonzero
    /// shape gradient.
    #[serde(default = "default_perturbation")]
    pub control_perturbation: f64,
}

fn default_perturbation() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    FD_EPSILON
}

fn default_directions() -> usize {
    8
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            epsilon: default_epsilon(),
            seed: 0,
            directions: default_directions(),
            full: false,
            control_perturbation: default_perturbation(),
        }
    }
}

/// Everything a run needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: DiscreteModel,
    pub grid: TimeGrid,
    pub x0: StateVector,
    pub u_init: ControlSignal,
    pub r_init: ShapeParams,
    pub sets: AdmissibleSets,
}

impl RunConfig {
    /// Parses a JSON document; `base_dir` anchors relative paths.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Checks every block and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.setup().map(|_| ())?;
        self.optimizer.validate()?;
        if !(self.gradcheck.epsilon > 0.0) {
            return Err(Error::InvalidConfig("gradcheck.epsilon must be positive".into()));
        }
        if !self.gradcheck.control_perturbation.is_finite() {
            return Err(Error::InvalidConfig("gradcheck.control_perturbation must be finite".into()));
        }
        if self.sweep.params.len() != self.sweep.grid_sizes.len() {
            return Err(Error::InvalidConfig(
                "sweep.params and sweep.grid_sizes must have the same length".into(),
            ));
        }
        Ok(())
    }

    /// Builds the model, grid, starting point and admissible sets.
    pub fn setup(&self) -> Result<Setup> {
        let model = DiscreteModel::build(self.model.clone())?;
        let grid = TimeGrid::for_model(&model);
        let r_init = self.shape.build()?;
        if !(self.control.radius > 0.0 && self.control.radius.is_finite()) {
            return Err(Error::InvalidConfig("control.radius must be positive".into()));
        }
        let radius = self.control.radius;
        let u_init = match &self.control.init {
            ControlInit::Zeros => ControlSignal::zeros(&grid, radius)?,
            ControlInit::Constant(c) => ControlSignal::constant(&grid, *c, radius)?,
            ControlInit::File(p) => {
                let path = self.resolve(p);
                let rows = read_csv(&path, &["t", "u"])?;
                check_len("control file rows", grid.len(), rows.len())?;
                ControlSignal::new(rows.iter().map(|r| r[1]).collect(), radius)?
            }
        };
        let n = model.n_modes();
        let x0 = match &self.initial_condition {
            InitialCondition::Modal(m) => {
                if m.q.len() > n || m.v.len() > n {
                    return Err(Error::InvalidConfig(format!(
                        "initial_condition.modal lists more than n_modes = {n} coefficients"
                    )));
                }
                StateVector::from_modes(n, &m.q, &m.v)?
            }
            InitialCondition::GridFile(p) => {
                let path = self.resolve(p);
                let rows = read_csv(&path, &["x", "w", "v"])?;
                check_len("initial condition rows", model.quad_grid().len(), rows.len())?;
                let w: Vec<f64> = rows.iter().map(|r| r[1]).collect();
                let v: Vec<f64> = rows.iter().map(|r| r[2]).collect();
                model.state_from_physical(&w, &v)?
            }
        };
        let sets = AdmissibleSets::from_parts(&u_init, &r_init)?;
        Ok(Setup {
            model,
            grid,
            x0,
            u_init,
            r_init,
            sets,
        })
    }

    /// The config as pretty JSON, with file paths made absolute so the echo
    /// can be re-run from any directory.
    pub fn echo(&self) -> String {
        let mut copy = self.clone();
        if let ControlInit::File(p) = &copy.control.init {
            copy.control.init = ControlInit::File(self.resolve(p));
        }
        if let InitialCondition::GridFile(p) = &copy.initial_condition {
            copy.initial_condition = InitialCondition::GridFile(self.resolve(p));
        }
        let mut text = serde_json::to_string_pretty(&copy).expect("config serializes");
        text.push('\n');
        text
    }
}

// unreadable inputs are config errors; Io is reserved for output failures
fn unreadable(path: &Path, err: std::io::Error) -> Error {
    Error::InvalidConfig(format!("{}: {err}", path.display()))
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| unreadable(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_json(&text, &base)
}

/// Numeric CSV with an exact header; returns the data rows.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| unreadable(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, msg: String| Error::Parse(format!("{}:{}: {msg}", path.display(), line + 1));
    let (hl, head) = lines.next().ok_or_else(|| bad(0, "empty file".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols != header {
        return Err(bad(hl, format!("expected header `{}`", header.join(","))));
    }
    lines
        .map(|(i, l)| {
            let row = l
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(i, format!("`{f}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(bad(i, format!("expected {} fields, got {}", header.len(), row.len())));
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_json(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(r#"{"model": {}}"#).unwrap();
        assert_eq!(cfg.model.n_modes, 16);
        assert_eq!(cfg.model.quad_points(), 64);
        assert_eq!(cfg.model.dt, 1e-3);
        assert_eq!(cfg.model.gamma, 0.1);
        assert_eq!(cfg.shape.family, ShapeFamily::GaussianBump);
        assert_eq!(cfg.control.radius, 10.0);
    }

    #[test]
    fn zero_gamma_is_rejected() {
        let err = parse(r#"{"model": {"gamma": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("gamma must be positive"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(r#"{"model": {"gama": 0.1}}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("gama"), "{err}");
        let err = parse("{\n  \"modle\": {}\n}").unwrap_err();
        assert!(err.to_string().contains("modle") && err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn tagged_variants_parse() {
        let cfg = parse(
            r#"{"control": {"init": {"constant": 0.5}, "radius": 3},
                "initial_condition": {"modal": {"q": [0, 1], "v": [0.5]}},
                "shape": {"family": "spline", "values": [0, 1, 0]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.control.init, ControlInit::Constant(0.5));
        let setup = cfg.setup().unwrap();
        assert_eq!(setup.x0.q[1], 1.0);
        assert_eq!(setup.x0.v[0], 0.5);
        assert_eq!(setup.r_init.len(), 3);
    }

    #[test]
    fn spline_without_values_is_rejected() {
        assert!(parse(r#"{"shape": {"family": "spline"}}"#).is_err());
    }

    #[test]
    fn missing_file_is_rejected() {
        let err = parse(r#"{"control": {"init": {"file": "does-not-exist.csv"}}}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse(r#"{"model": {"n_modes": 4}, "optimizer": {"mode": "alternating"}}"#).unwrap();
        let again = parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
    }
}

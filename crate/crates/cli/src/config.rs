//! Problem file schema. Matrices are nested row-major arrays.

use std::fmt;
use std::path::Path;

use codesign_core::codesign::{CoDesignConfig, DesignFunction};
use codesign_core::matrix_equations::C64;
use codesign_core::plant::{Nonlinearity, PlantFamily, StateMatrix, Transform};
use codesign_core::simulate::{DisturbanceSignal, DEFAULT_DT};
use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub plant: PlantSpec,
    #[serde(default)]
    pub codesign: CodesignSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub n_d: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineTerm {
    pub index: usize,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    None,
    /// `gain * sin(arg_scale * x[arg_index])` added to state `slot`.
    ScaledSine {
        slot: usize,
        arg_index: usize,
        gain: f64,
        #[serde(default = "one")]
        arg_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub dimensions: Dimensions,
    pub a0: Matrix,
    #[serde(default)]
    pub a_terms: Vec<AffineTerm>,
    pub b: Matrix,
    pub b_w: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub nonlinearity: NonlinearitySpec,
    /// Defaults to the catalog value of the nonlinearity.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignFnSpec {
    Zero,
    Linear { coefficients: Vec<f64> },
    Quadratic { coefficients: Vec<f64> },
}

/// A real pole or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodesignSpec {
    pub eta: f64,
    pub eta_bar: f64,
    pub mu: Option<f64>,
    pub beta_d: f64,
    pub beta_c: f64,
    pub design_fn: DesignFnSpec,
    pub armijo_nu: f64,
    pub armijo_zeta: f64,
    pub eps_g: f64,
    pub max_iters: usize,
    pub transform: Option<Matrix>,
    pub pole_targets: Vec<PoleSpec>,
    /// Defaults to the midpoint of the design bounds.
    pub initial_d: Option<Vec<f64>>,
    pub hurwitz_margin: f64,
}

impl Default for CodesignSpec {
    fn default() -> Self {
        let base = CoDesignConfig::default();
        Self {
            eta: base.eta,
            eta_bar: base.eta_bar,
            mu: base.mu,
            beta_d: base.beta_d,
            beta_c: base.beta_c,
            design_fn: DesignFnSpec::Zero,
            armijo_nu: base.armijo_nu,
            armijo_zeta: base.armijo_zeta,
            eps_g: base.eps_g,
            max_iters: base.max_iters,
            transform: None,
            pole_targets: Vec::new(),
            initial_d: None,
            hurwitz_margin: base.hurwitz_margin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    Zero,
    Constant { value: Vec<f64>, t_on: f64, t_off: f64 },
    CanonicalInitial { index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub x0: Option<Vec<f64>>,
    pub disturbance: DisturbanceSpec,
    pub t_end: f64,
    pub dt: f64,
    /// Gain used by `simulate --gains inline`.
    pub gains: Option<Matrix>,
    /// Design used with inline gains; defaults to the co-design start point.
    pub design: Option<Vec<f64>>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            x0: None,
            disturbance: DisturbanceSpec::Zero,
            t_end: 10.0,
            dt: DEFAULT_DT,
            gains: None,
            design: None,
        }
    }
}

/// Schema or consistency error with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = format!("{inner}");
        ConfigError::new(if path == "." { String::new() } else { path }, message)
    })
}

pub fn load(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn matrix(rows: &Matrix, shape: (usize, usize), path: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != shape.0 {
        return Err(ConfigError::new(
            path,
            format!("expected {} rows, got {}", shape.0, rows.len()),
        ));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != shape.1 {
            return Err(ConfigError::new(
                format!("{path}[{i}]"),
                format!("expected {} columns, got {}", shape.1, r.len()),
            ));
        }
    }
    let m = DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::new(path, "entries must be finite"));
    }
    Ok(m)
}

pub fn vector(values: &[f64], len: usize, path: &str) -> Result<DVector<f64>, ConfigError> {
    if values.len() != len {
        return Err(ConfigError::new(
            path,
            format!("expected {len} entries, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::new(path, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

pub fn to_rows(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PlantSpec {
    pub fn build(&self) -> Result<PlantFamily, ConfigError> {
        let Dimensions {
            n_x,
            n_u,
            n_w,
            n_z,
            n_d,
        } = self.dimensions;
        let a0 = matrix(&self.a0, (n_x, n_x), "plant.a0")?;
        let mut terms = Vec::with_capacity(self.a_terms.len());
        for (i, t) in self.a_terms.iter().enumerate() {
            if t.index >= n_d {
                return Err(ConfigError::new(
                    format!("plant.a_terms[{i}].index"),
                    format!("design index {} out of range for n_d = {n_d}", t.index),
                ));
            }
            terms.push((
                t.index,
                matrix(&t.matrix, (n_x, n_x), &format!("plant.a_terms[{i}].matrix"))?,
            ));
        }
        let nonlinearity = match self.nonlinearity {
            NonlinearitySpec::None => Nonlinearity::None,
            NonlinearitySpec::ScaledSine {
                slot,
                arg_index,
                gain,
                arg_scale,
            } => {
                if slot >= n_x || arg_index >= n_x {
                    return Err(ConfigError::new("plant.nonlinearity", "state index out of range"));
                }
                Nonlinearity::ScaledSine {
                    slot,
                    arg_index,
                    gain,
                    arg_scale,
                }
            }
        };
        let catalog = nonlinearity.catalog_lipschitz().unwrap_or(0.0);
        let alpha = match self.alpha {
            Some(a) if !(a >= 0.0) || !a.is_finite() => {
                return Err(ConfigError::new("plant.alpha", "must be finite and non-negative"))
            }
            Some(a) => {
                if a < catalog {
                    warn!("alpha = {a} is below the nonlinearity's Lipschitz constant {catalog}");
                }
                a
            }
            None => catalog,
        };
        let plant = PlantFamily {
            state_matrix: StateMatrix::Affine { a0, terms },
            b: matrix(&self.b, (n_x, n_u), "plant.b")?,
            b_w: matrix(&self.b_w, (n_x, n_w), "plant.b_w")?,
            c: matrix(&self.c, (n_z, n_x), "plant.c")?,
            d: matrix(&self.d, (n_z, n_u), "plant.d")?,
            nonlinearity,
            alpha,
            d_lower: vector(&self.d_lower, n_d, "plant.d_lower")?,
            d_upper: vector(&self.d_upper, n_d, "plant.d_upper")?,
        };
        plant.validate().map_err(|e| ConfigError::new("plant", e.to_string()))?;
        Ok(plant)
    }
}

impl CodesignSpec {
    pub fn build(&self, plant: &PlantFamily) -> Result<CoDesignConfig, ConfigError> {
        let n_d = plant.n_d();
        let design_fn = match &self.design_fn {
            DesignFnSpec::Zero => DesignFunction::Zero,
            DesignFnSpec::Linear { coefficients } => {
                DesignFunction::Linear(vector(coefficients, n_d, "codesign.design_fn.coefficients")?)
            }
            DesignFnSpec::Quadratic { coefficients } => {
                DesignFunction::Quadratic(vector(coefficients, n_d, "codesign.design_fn.coefficients")?)
            }
        };
        let transform = match &self.transform {
            Some(rows) => {
                let n = plant.n_x();
                let t = matrix(rows, (n, n), "codesign.transform")?;
                Some(Transform::new(t).map_err(|e| ConfigError::new("codesign.transform", e.to_string()))?)
            }
            None => None,
        };
        let initial_d = match &self.initial_d {
            Some(v) => vector(v, n_d, "codesign.initial_d")?,
            None => (&plant.d_lower + &plant.d_upper) * 0.5,
        };
        let pole_targets = self
            .pole_targets
            .iter()
            .map(|p| match *p {
                PoleSpec::Real(re) => C64::new(re, 0.0),
                PoleSpec::Complex([re, im]) => C64::new(re, im),
            })
            .collect();
        let config = CoDesignConfig {
            eta: self.eta,
            eta_bar: self.eta_bar,
            mu: self.mu,
            beta_d: self.beta_d,
            beta_c: self.beta_c,
            design_fn,
            armijo_nu: self.armijo_nu,
            armijo_zeta: self.armijo_zeta,
            eps_g: self.eps_g,
            max_iters: self.max_iters,
            transform,
            pole_targets,
            initial_d,
            hurwitz_margin: self.hurwitz_margin,
        };
        config
            .validate(n_d)
            .map_err(|e| ConfigError::new("codesign", e.to_string()))?;
        Ok(config)
    }
}

impl SimulateSpec {
    pub fn signal(&self) -> DisturbanceSignal {
        match &self.disturbance {
            DisturbanceSpec::Zero => DisturbanceSignal::Zero,
            DisturbanceSpec::Constant { value, t_on, t_off } => DisturbanceSignal::Constant {
                value: DVector::from_column_slice(value),
                t_on: *t_on,
                t_off: *t_off,
            },
            DisturbanceSpec::CanonicalInitial { index } => DisturbanceSignal::CanonicalInitial(*index),
        }
    }

    pub fn check(&self, plant: &PlantFamily) -> Result<(), ConfigError> {
        if let Some(x0) = &self.x0 {
            vector(x0, plant.n_x(), "simulate.x0")?;
        }
        match &self.disturbance {
            DisturbanceSpec::Constant { value, t_on, t_off } => {
                vector(value, plant.n_w(), "simulate.disturbance.value")?;
                if !(t_on <= t_off) {
                    return Err(ConfigError::new("simulate.disturbance", "t_on must not exceed t_off"));
                }
            }
            DisturbanceSpec::CanonicalInitial { index } if *index >= plant.n_w() => {
                return Err(ConfigError::new("simulate.disturbance.index", "out of range"));
            }
            _ => {}
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::new("simulate.dt", "must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(ConfigError::new("simulate.t_end", "must be non-negative"));
        }
        if let Some(g) = &self.gains {
            matrix(g, (plant.n_u(), plant.n_x()), "simulate.gains")?;
        }
        if let Some(d) = &self.design {
            vector(d, plant.n_d(), "simulate.design")?;
        }
        Ok(())
    }
}

/// Plant and co-design settings, fully checked.
pub struct Problem {
    pub spec: ProblemConfig,
    pub plant: PlantFamily,
    pub codesign: CoDesignConfig,
}

impl ProblemConfig {
    pub fn build(self) -> Result<Problem, ConfigError> {
        let plant = self.plant.build()?;
        let codesign = self.codesign.build(&plant)?;
        self.simulate.check(&plant)?;
        Ok(Problem {
            spec: self,
            plant,
            codesign,
        })
    }
}

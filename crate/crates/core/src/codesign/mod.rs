//! Initial controller synthesis, the trace objective with its analytic
//! gradients, and the projected Armijo gradient descent over `(d, K)`.

mod descent;
mod initial;
mod objective;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix_equations::C64;
use crate::plant::Transform;

pub use descent::{
    armijo_step, backmap_controller, run_codesign, ArmijoStep, Delta0Record, IterationRecord, RunReport, Termination,
};
pub use initial::{synth_initial_controller, GainForm, InitialController};
pub use objective::{
    evaluate, find_mu, grad_d, grad_k, gradients, objective, solve_design_certificate, Evaluation, Gradients,
};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Plant-side cost `f_d(d)`.
#[derive(Clone)]
pub enum DesignFunction {
    Zero,
    /// `c^T d`
    Linear(DVector<f64>),
    /// `sum_i c_i d_i^2`
    Quadratic(DVector<f64>),
    Custom {
        value: ScalarFn,
        gradient: VectorFn,
    },
}

impl fmt::Debug for DesignFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Linear(c) => f.debug_tuple("Linear").field(&c.as_slice()).finish(),
            Self::Quadratic(c) => f.debug_tuple("Quadratic").field(&c.as_slice()).finish(),
            Self::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

impl DesignFunction {
    pub fn value(&self, d: &DVector<f64>) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Linear(c) => c.dot(d),
            Self::Quadratic(c) => c.iter().zip(d.iter()).map(|(c, d)| c * d * d).sum(),
            Self::Custom { value, .. } => value(d),
        }
    }

    pub fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Zero => DVector::zeros(d.len()),
            Self::Linear(c) => c.clone(),
            Self::Quadratic(c) => c.component_mul(d) * 2.0,
            Self::Custom { gradient, .. } => gradient(d),
        }
    }

    fn check_len(&self, n_d: usize) -> Result<()> {
        match self {
            Self::Linear(c) | Self::Quadratic(c) if c.len() != n_d => Err(Error::Config(format!(
                "design function has {} coefficients, expected {n_d}",
                c.len()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoDesignConfig {
    /// Margin in the initial-controller equation on the original plant.
    pub eta: f64,
    /// Same margin on the transformed plant.
    pub eta_bar: f64,
    /// Output weight in the certificate equation; `None` searches
    /// `1, 1/2, 1/4, ...` at the starting point.
    pub mu: Option<f64>,
    pub beta_d: f64,
    pub beta_c: f64,
    pub design_fn: DesignFunction,
    pub armijo_nu: f64,
    pub armijo_zeta: f64,
    pub eps_g: f64,
    pub max_iters: usize,
    /// Used only when the initial-controller condition fails on the original
    /// coordinates.
    pub transform: Option<Transform>,
    /// Targets for the linear part of the initial gain when `A(d0)` is not
    /// Hurwitz.
    pub pole_targets: Vec<C64>,
    pub initial_d: DVector<f64>,
    pub hurwitz_margin: f64,
}

impl Default for CoDesignConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            eta_bar: 1e-4,
            mu: None,
            beta_d: 0.0,
            beta_c: 1.0,
            design_fn: DesignFunction::Zero,
            armijo_nu: 0.5,
            armijo_zeta: 0.3,
            eps_g: 1e-3,
            max_iters: 500,
            transform: None,
            pole_targets: Vec::new(),
            initial_d: DVector::zeros(0),
            hurwitz_margin: 0.0,
        }
    }
}

/// Number of halvings tried when `mu` is not given.
pub const MU_HALVINGS: usize = 20;
/// Cap on step reductions in one line search.
pub const MAX_STEP_REDUCTIONS: usize = 60;

impl CoDesignConfig {
    pub fn validate(&self, n_d: usize) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.armijo_nu) || !open_unit(self.armijo_zeta) {
            return Err(Error::Config("Armijo parameters must lie in (0, 1)".into()));
        }
        if !(self.eps_g > 0.0) {
            return Err(Error::Config("eps_g must be positive".into()));
        }
        if !(self.eta > 0.0) || !(self.eta_bar > 0.0) {
            return Err(Error::Config("eta and eta_bar must be positive".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::Config("mu must be positive".into()));
            }
        }
        if !(self.beta_d >= 0.0) || !(self.beta_c >= 0.0) {
            return Err(Error::Config("objective weights must be non-negative".into()));
        }
        if !(self.hurwitz_margin >= 0.0) {
            return Err(Error::Config("Hurwitz margin must be non-negative".into()));
        }
        if self.initial_d.len() != n_d {
            return Err(Error::Config(format!(
                "initial design has {} entries, plant has {n_d}",
                self.initial_d.len()
            )));
        }
        self.design_fn.check_len(n_d)
    }

    pub(crate) fn mu_or_default(&self) -> f64 {
        self.mu.unwrap_or(1.0)
    }
}

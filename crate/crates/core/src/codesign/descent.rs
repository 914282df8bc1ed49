use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};

use super::initial::{synth_initial_controller, GainForm, InitialController};
use super::objective::{certify, evaluate, find_mu, gradients, Evaluation, Gradients};
use super::{CoDesignConfig, MAX_STEP_REDUCTIONS};
use crate::error::{Error, Result};
use crate::matrix_equations::CertificateSolution;
use crate::plant::{is_hurwitz, place_poles, GainMatrix, PlantFamily, Transform};

/// An accepted line-search step.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoStep {
    pub step: f64,
    pub d: DVector<f64>,
    pub k: GainMatrix,
    pub evaluation: Evaluation,
}

/// Backtracking over `s = 1, nu, nu^2, ...` until
/// `f(x(s)) < f(x) - zeta g^T (x - x(s))` with `x(s) = (P[d - s g_d], K - s g_K)`
/// and `P` the box projection. Away from the bounds the right-hand side is
/// `f(x) - s zeta |g|^2`. Returns `None` when no step passes within
/// [`MAX_STEP_REDUCTIONS`] reductions.
pub fn armijo_step(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    current: f64,
    grads: &Gradients,
    config: &CoDesignConfig,
) -> Option<ArmijoStep> {
    if !grads.squared_norm().is_finite() {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..=MAX_STEP_REDUCTIONS {
        let d_new = plant.project(&(d - &grads.d * step));
        let k_new = GainMatrix(&k.0 - &grads.k * step);
        let decrease = grads.d.dot(&(d - &d_new)) + grads.k.dot(&(&k.0 - &k_new.0));
        if let Some(evaluation) = evaluate(plant, &d_new, &k_new, config) {
            if evaluation.objective < current - config.armijo_zeta * decrease {
                return Some(ArmijoStep {
                    step,
                    d: d_new,
                    k: k_new,
                    evaluation,
                });
            }
        }
        step *= config.armijo_nu;
    }
    None
}

/// `K = K_bar T^-1`.
pub fn backmap_controller(k_bar: &GainMatrix, transform: &Transform) -> GainMatrix {
    GainMatrix(&k_bar.0 * &transform.t_inv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub d: DVector<f64>,
    pub k: DMatrix<f64>,
    pub objective: f64,
    pub grad_d_norm: f64,
    pub grad_k_norm: f64,
    /// Step accepted from this iterate; `None` for the final one.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `||d+ - d|| + ||K+ - K|| <= eps_g`.
    StepTolerance,
    /// Projected gradient norm at most `eps_g / 10`.
    GradientTolerance,
    MaxIterations,
    LineSearchStalled,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Self::StepTolerance | Self::GradientTolerance)
    }
}

/// `delta0` against its threshold for one coordinate system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta0Record {
    pub delta0: f64,
    pub threshold: f64,
    pub eta: f64,
    pub feasible: bool,
}

impl From<(&InitialController, f64)> for Delta0Record {
    fn from((init, eta): (&InitialController, f64)) -> Self {
        Self {
            delta0: init.delta0,
            threshold: init.threshold,
            eta,
            feasible: init.feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub original: Delta0Record,
    /// Present when the original coordinates failed the condition.
    pub transformed: Option<Delta0Record>,
    pub transform: Transform,
    /// Linear part of the initial gain, original coordinates.
    pub kp0: GainMatrix,
    /// Initial gain in the working coordinates.
    pub k0_bar: GainMatrix,
    pub gain_form: GainForm,
    pub mu: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub converged: bool,
    pub final_d: DVector<f64>,
    pub final_k_bar: GainMatrix,
    pub final_k_original: GainMatrix,
    pub final_p: CertificateSolution,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub improvement_percent: f64,
}

/// The full pipeline: initial gain (with the coordinate change when needed),
/// output-weight check, projected Armijo descent, and the gain back-map.
///
/// The plant is expected to satisfy the detectability, output-structure and
/// `Phi(0) = 0` assumptions; see [`PlantFamily::check_assumptions`].
pub fn run_codesign(plant: &PlantFamily, config: &CoDesignConfig) -> Result<RunReport> {
    plant.validate()?;
    config.validate(plant.n_d())?;

    let mut d0 = config.initial_d.clone();
    if !plant.in_bounds(&d0) {
        warn!("initial design outside bounds; projecting");
        d0 = plant.project(&d0);
    }

    let a0 = plant.assemble_a(&d0)?;
    let kp0 = if is_hurwitz(&a0, config.hurwitz_margin)? {
        GainMatrix::zeros(plant.n_u(), plant.n_x())
    } else {
        if config.pole_targets.is_empty() {
            return Err(Error::Config(
                "A(d0) is not Hurwitz and no pole targets were given".into(),
            ));
        }
        place_poles(&a0, &plant.b, &config.pole_targets)?
    };

    let original = synth_initial_controller(plant, &d0, &kp0, config.eta, config.mu)?;
    let original_record = Delta0Record::from((&original, config.eta));

    let (work_plant, transform, init, transformed_record) = if original.feasible {
        (plant.clone(), Transform::identity(plant.n_x()), original, None)
    } else {
        let transform = match &config.transform {
            Some(t) if !t.is_identity() => t.clone(),
            _ => {
                return Err(Error::Infeasible {
                    delta0: original.delta0,
                    threshold: original.threshold,
                })
            }
        };
        info!("initial-controller condition fails; changing coordinates");
        let tplant = plant.transform(&transform)?;
        let kp0_bar = GainMatrix(&kp0.0 * &transform.t);
        let init = synth_initial_controller(&tplant, &d0, &kp0_bar, config.eta_bar, config.mu)?;
        let record = Delta0Record::from((&init, config.eta_bar));
        if !init.feasible {
            return Err(Error::Infeasible {
                delta0: init.delta0,
                threshold: init.threshold,
            });
        }
        (tplant, transform, init, Some(record))
    };

    let k0_bar = init.k0.clone();
    let mu = match config.mu {
        Some(mu) => {
            certify(&work_plant, &d0, &k0_bar, mu).ok_or(Error::NoFeasibleMu)?;
            mu
        }
        None => find_mu(&work_plant, &d0, &k0_bar, 1.0).ok_or(Error::NoFeasibleMu)?.0,
    };
    info!("output weight mu = {mu}");
    let config = CoDesignConfig {
        mu: Some(mu),
        ..config.clone()
    };

    let start = evaluate(&work_plant, &d0, &k0_bar, &config).ok_or(Error::NoFeasibleMu)?;
    let (iterations, termination, final_eval, final_d, final_k) =
        descend(&work_plant, d0, k0_bar.clone(), start.clone(), &config)?;

    let final_k_original = backmap_controller(&final_k, &transform);
    let objective_initial = start.objective;
    let objective_final = final_eval.objective;
    let improvement_percent = if objective_initial != 0.0 {
        100.0 * (objective_initial - objective_final) / objective_initial
    } else {
        0.0
    };

    Ok(RunReport {
        original: original_record,
        transformed: transformed_record,
        transform,
        kp0,
        k0_bar,
        gain_form: init.gain_form,
        mu,
        iterations,
        termination,
        converged: termination.converged(),
        final_d,
        final_k_bar: final_k,
        final_k_original,
        final_p: final_eval.certificate,
        objective_initial,
        objective_final,
        improvement_percent,
    })
}

/// Norm of `(d - P[d - g_d], g_K)`; zero exactly at stationary points of the
/// box-constrained problem.
fn projected_gradient_norm(plant: &PlantFamily, d: &DVector<f64>, grads: &Gradients) -> f64 {
    let pd = d - plant.project(&(d - &grads.d));
    (pd.norm_squared() + grads.k.norm_squared()).sqrt()
}

type DescentOutcome = (Vec<IterationRecord>, Termination, Evaluation, DVector<f64>, GainMatrix);

fn descend(
    plant: &PlantFamily,
    mut d: DVector<f64>,
    mut k: GainMatrix,
    mut current: Evaluation,
    config: &CoDesignConfig,
) -> Result<DescentOutcome> {
    let mut records = Vec::new();
    let record = |d: &DVector<f64>, k: &GainMatrix, f: f64, g: &Gradients, step: Option<f64>| IterationRecord {
        d: d.clone(),
        k: k.0.clone(),
        objective: f,
        grad_d_norm: g.d.norm(),
        grad_k_norm: g.k.norm(),
        step,
    };

    let termination = loop {
        let grads = gradients(plant, &d, &k, &current.certificate, config)?;
        if projected_gradient_norm(plant, &d, &grads) <= config.eps_g / 10.0 {
            records.push(record(&d, &k, current.objective, &grads, None));
            break Termination::GradientTolerance;
        }
        if records.len() == config.max_iters {
            records.push(record(&d, &k, current.objective, &grads, None));
            break Termination::MaxIterations;
        }
        let Some(step) = armijo_step(plant, &d, &k, current.objective, &grads, config) else {
            warn!("line search stalled at iteration {}", records.len());
            records.push(record(&d, &k, current.objective, &grads, None));
            break Termination::LineSearchStalled;
        };
        records.push(record(&d, &k, current.objective, &grads, Some(step.step)));
        let change = (&step.d - &d).norm() + (&step.k.0 - &k.0).norm();
        debug!(
            "iter {}: f = {:.8}, s = {:.3e}, change = {:.3e}",
            records.len(),
            step.evaluation.objective,
            step.step,
            change
        );
        if change <= config.eps_g {
            // the iterate that produced the small step is reported as optimal
            break Termination::StepTolerance;
        }
        d = step.d;
        k = step.k;
        current = step.evaluation;
    };
    Ok((records, termination, current, d, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codesign::{objective, DesignFunction};
    use crate::plant::{Nonlinearity, StateMatrix};
    use nalgebra::{dmatrix, dvector};

    fn stable_plant() -> PlantFamily {
        PlantFamily {
            state_matrix: StateMatrix::Affine {
                a0: dmatrix![-2.0, 1.0; 0.0, -3.0],
                terms: vec![(0, dmatrix![0.1, 0.0; 0.0, 0.0])],
            },
            b: dmatrix![0.0; 1.0],
            b_w: dmatrix![1.0; 0.0],
            c: dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0],
            d: dmatrix![0.0; 0.0; 1.0],
            nonlinearity: Nonlinearity::None,
            alpha: 0.0,
            d_lower: dvector![-5.0],
            d_upper: dvector![5.0],
        }
    }

    #[test]
    fn quadratic_bowl_accepts_unit_step() {
        // f = 1/2 d^2 through beta_d = 1/2, c = 1; gradient at d = 1 is 1
        let plant = stable_plant();
        let config = CoDesignConfig {
            beta_d: 0.5,
            beta_c: 0.0,
            design_fn: DesignFunction::Quadratic(dvector![1.0]),
            mu: Some(1.0),
            initial_d: dvector![1.0],
            ..Default::default()
        };
        let d = dvector![1.0];
        let k = GainMatrix::zeros(1, 2);
        let f = objective(&plant, &d, &k, &config);
        let grads = Gradients {
            d: dvector![1.0],
            k: DMatrix::zeros(1, 2),
        };
        let step = armijo_step(&plant, &d, &k, f, &grads, &config).unwrap();
        assert_eq!(step.step, 1.0);
        assert_eq!(step.d, dvector![0.0]);
    }

    #[test]
    fn zero_gradient_stalls_line_search() {
        let plant = stable_plant();
        let config = CoDesignConfig {
            mu: Some(1.0),
            initial_d: dvector![0.0],
            ..Default::default()
        };
        let d = dvector![0.0];
        let k = GainMatrix::zeros(1, 2);
        let f = objective(&plant, &d, &k, &config);
        let grads = Gradients {
            d: dvector![0.0],
            k: DMatrix::zeros(1, 2),
        };
        assert!(armijo_step(&plant, &d, &k, f, &grads, &config).is_none());
    }

    #[test]
    fn pure_design_descent_finds_interior_minimum() {
        // f_d = (d - 0)^2 weighted: minimizer of c d^2 + linear term via custom fn
        let plant = stable_plant();
        let config = CoDesignConfig {
            beta_d: 1.0,
            beta_c: 0.0,
            design_fn: DesignFunction::Custom {
                value: std::sync::Arc::new(|d| (d[0] - 1.5).powi(2)),
                gradient: std::sync::Arc::new(|d| dvector![2.0 * (d[0] - 1.5)]),
            },
            mu: Some(1.0),
            eps_g: 1e-6,
            initial_d: dvector![-2.0],
            ..Default::default()
        };
        let report = run_codesign(&plant, &config).unwrap();
        assert!(report.converged);
        assert!((report.final_d[0] - 1.5).abs() < 1e-4, "{}", report.final_d[0]);
        assert!(report.transformed.is_none());
        assert_eq!(report.final_k_original, report.final_k_bar);
    }

    #[test]
    fn active_bound_is_a_stationary_point() {
        // f_d = d is minimized on the lower bound, where the raw gradient stays 1
        let plant = stable_plant();
        let config = CoDesignConfig {
            beta_d: 1.0,
            beta_c: 0.0,
            design_fn: DesignFunction::Linear(dvector![1.0]),
            mu: Some(1.0),
            initial_d: dvector![0.3],
            ..Default::default()
        };
        let report = run_codesign(&plant, &config).unwrap();
        assert_eq!(report.final_d, dvector![-5.0]);
        assert_eq!(report.termination, Termination::GradientTolerance);
    }

    #[test]
    fn stationary_start_exits_immediately() {
        let mut plant = stable_plant();
        plant.state_matrix = StateMatrix::Affine {
            a0: dmatrix![-2.0, 1.0; 0.0, -3.0],
            terms: vec![],
        };
        let config = CoDesignConfig {
            beta_c: 0.0,
            mu: Some(1.0),
            initial_d: dvector![0.0],
            ..Default::default()
        };
        let report = run_codesign(&plant, &config).unwrap();
        assert_eq!(report.iterations.len(), 1);
        assert_eq!(report.termination, Termination::GradientTolerance);
        assert_eq!(report.improvement_percent, 0.0);
    }

    #[test]
    fn identity_backmap() {
        let k = GainMatrix(dmatrix![1.0, -2.0, 3.0]);
        assert_eq!(backmap_controller(&k, &Transform::identity(3)), k);
    }

    #[test]
    fn infeasible_without_transform() {
        let mut plant = stable_plant();
        plant.nonlinearity = Nonlinearity::scaled_sine(1, 0, 40.0);
        plant.alpha = 40.0;
        let config = CoDesignConfig {
            mu: Some(1.0),
            initial_d: dvector![0.0],
            ..Default::default()
        };
        assert!(matches!(run_codesign(&plant, &config), Err(Error::Infeasible { .. })));
    }
}

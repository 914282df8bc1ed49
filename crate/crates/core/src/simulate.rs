//! Fixed-step RK4 integration of the closed loop
//! `x' = (A(d) + B K) x + Phi(x) + B_w w(t)`, the L2 output cost, and a
//! numerical check of the trace bound on that cost.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix_equations::{max_real_part, CertificateSolution};
use crate::plant::{GainMatrix, PlantFamily};

pub const DEFAULT_DT: f64 = 1e-3;
/// Norm beyond which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e9;
const MAX_HORIZON: f64 = 100.0;
const TRUNCATION_LEVEL: f64 = 1e-12;
const TRUNCATION_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Zero,
    /// `value` on `[t_on, t_off)`, zero elsewhere.
    Constant {
        value: DVector<f64>,
        t_on: f64,
        t_off: f64,
    },
    /// `w = 0` with the initial state replaced by `B_w e_k`.
    CanonicalInitial(usize),
}

impl DisturbanceSignal {
    fn validate(&self, n_w: usize) -> Result<()> {
        match self {
            Self::Zero => Ok(()),
            Self::Constant { value, t_on, t_off } => {
                if value.len() != n_w {
                    return Err(Error::Dimension(format!(
                        "disturbance has {} entries, expected {n_w}",
                        value.len()
                    )));
                }
                if !(t_on <= t_off) {
                    return Err(Error::Config("disturbance needs t_on <= t_off".into()));
                }
                Ok(())
            }
            Self::CanonicalInitial(k) if *k >= n_w => Err(Error::Config(format!(
                "canonical direction {k} out of range for {n_w} disturbance inputs"
            ))),
            Self::CanonicalInitial(_) => Ok(()),
        }
    }

    pub fn at(&self, t: f64, n_w: usize) -> DVector<f64> {
        match self {
            Self::Constant { value, t_on, t_off } if t >= *t_on && t < *t_off => value.clone(),
            _ => DVector::zeros(n_w),
        }
    }
}

/// Samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub disturbance: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

/// Closed-loop vector field with its constant pieces assembled once.
struct ClosedLoop<'a> {
    plant: &'a PlantFamily,
    ac: DMatrix<f64>,
}

impl ClosedLoop<'_> {
    fn field(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.ac * x + self.plant.eval_phi(x) + &self.plant.b_w * w
    }

    fn step(&self, x: &DVector<f64>, t: f64, dt: f64, signal: &DisturbanceSignal) -> DVector<f64> {
        let n_w = self.plant.n_w();
        let w0 = signal.at(t, n_w);
        let wh = signal.at(t + dt / 2.0, n_w);
        let w1 = signal.at(t + dt, n_w);
        let k1 = self.field(x, &w0);
        let k2 = self.field(&(x + &k1 * (dt / 2.0)), &wh);
        let k3 = self.field(&(x + &k2 * (dt / 2.0)), &wh);
        let k4 = self.field(&(x + &k3 * dt), &w1);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config("dt must be positive".into()));
    }
    if !(t_end >= dt) || !t_end.is_finite() {
        return Err(Error::Config("t_end must be at least dt".into()));
    }
    Ok((t_end / dt + 1e-9).floor() as usize)
}

fn check_state(x: &DVector<f64>, time: f64) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Diverged { time });
    }
    Ok(())
}

fn initial_state(plant: &PlantFamily, x0: &DVector<f64>, signal: &DisturbanceSignal) -> Result<DVector<f64>> {
    if let DisturbanceSignal::CanonicalInitial(k) = signal {
        return Ok(plant.b_w.column(*k).into_owned());
    }
    if x0.len() != plant.n_x() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, expected {}",
            x0.len(),
            plant.n_x()
        )));
    }
    Ok(x0.clone())
}

/// Integrates from `x0` over `[0, t_end]` with step `dt`, recording
/// `u = K x`, `z = C x + D u` and `w` at every grid point.
pub fn integrate(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    x0: &DVector<f64>,
    signal: &DisturbanceSignal,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    signal.validate(plant.n_w())?;
    let steps = step_count(t_end, dt)?;
    let sys = ClosedLoop {
        plant,
        ac: plant.closed_loop(d, k)?,
    };
    let mut x = initial_state(plant, x0, signal)?;

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        disturbance: Vec::with_capacity(steps + 1),
    };
    for i in 0..=steps {
        let t = i as f64 * dt;
        check_state(&x, t)?;
        let u = &k.0 * &x;
        traj.outputs.push(&plant.c * &x + &plant.d * &u);
        traj.inputs.push(u);
        traj.disturbance.push(signal.at(t, plant.n_w()));
        traj.times.push(t);
        if i < steps {
            let next = sys.step(&x, t, dt, signal);
            traj.states.push(x);
            x = next;
        } else {
            traj.states.push(x.clone());
        }
    }
    Ok(traj)
}

fn trapezoid(values: impl IntoIterator<Item = f64>, dt: f64) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for v in values {
        if let Some(p) = prev {
            total += 0.5 * dt * (p + v);
        }
        prev = Some(v);
    }
    total
}

/// Trapezoidal `int z^T z dt` over the recorded horizon.
pub fn l2_output_cost(traj: &Trajectory) -> f64 {
    if traj.len() < 2 {
        return 0.0;
    }
    let dt = traj.times[1] - traj.times[0];
    trapezoid(traj.outputs.iter().map(|z| z.norm_squared()), dt)
}

/// Horizon `20 / |max Re lambda(Ac)|`, capped at 100.
pub fn default_horizon(ac: &DMatrix<f64>) -> Result<f64> {
    let decay = max_real_part(ac)?.abs();
    Ok(if decay > 0.0 {
        (20.0 / decay).min(MAX_HORIZON)
    } else {
        MAX_HORIZON
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCost {
    pub cost: f64,
    /// Time at which the integral was cut off because `z^T z` stayed
    /// negligible; `None` if it ran to the horizon.
    pub truncated_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub directions: Vec<DirectionCost>,
    pub total_cost: f64,
    /// `tr(B_w^T P B_w) / mu`.
    pub bound: f64,
    pub passed: bool,
    /// Direction and time of a divergent run, if any.
    pub diverged: Option<(usize, f64)>,
    pub horizon: f64,
    pub dt: f64,
}

/// For each disturbance channel `k`, integrates from `x(0) = B_w e_k` with
/// `w = 0` and compares the summed output energy with
/// `tr(B_w^T P B_w) / mu`. `t_end = None` uses [`default_horizon`].
pub fn verify_trace_bound(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    p: &CertificateSolution,
    mu: f64,
    t_end: Option<f64>,
    dt: f64,
) -> Result<BoundReport> {
    if !(mu > 0.0) {
        return Err(Error::Config("mu must be positive".into()));
    }
    let ac = plant.closed_loop(d, k)?;
    let horizon = match t_end {
        Some(t) => t,
        None => default_horizon(&ac)?,
    };
    let steps = step_count(horizon, dt)?;
    let bound = (plant.b_w.transpose() * &p.p * &plant.b_w).trace() / mu;
    let sys = ClosedLoop { plant, ac };
    let cz = plant.output_map(k);

    let mut directions = Vec::with_capacity(plant.n_w());
    let mut diverged = None;
    for dir in 0..plant.n_w() {
        let mut x = plant.b_w.column(dir).into_owned();
        let mut cost = 0.0;
        let mut prev = (&cz * &x).norm_squared();
        let mut quiet = usize::from(prev < TRUNCATION_LEVEL);
        let mut truncated_at = None;
        for i in 0..steps {
            let t = (i + 1) as f64 * dt;
            x = sys.step(&x, t - dt, dt, &DisturbanceSignal::Zero);
            if check_state(&x, t).is_err() {
                diverged = Some((dir, t));
                break;
            }
            let zz = (&cz * &x).norm_squared();
            cost += 0.5 * dt * (prev + zz);
            prev = zz;
            quiet = if zz < TRUNCATION_LEVEL { quiet + 1 } else { 0 };
            if quiet >= TRUNCATION_STEPS {
                truncated_at = Some(t);
                break;
            }
        }
        debug!("direction {dir}: cost {cost:.6e}, truncated at {truncated_at:?}");
        directions.push(DirectionCost { cost, truncated_at });
        if diverged.is_some() {
            break;
        }
    }
    let total_cost: f64 = directions.iter().map(|c| c.cost).sum();
    let passed = diverged.is_none() && total_cost <= bound * (1.0 + 1e-6);
    Ok(BoundReport {
        directions,
        total_cost,
        bound,
        passed,
        diverged,
        horizon,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codesign::solve_design_certificate;
    use crate::plant::{Nonlinearity, StateMatrix};
    use nalgebra::{dmatrix, dvector};

    fn linear(a0: DMatrix<f64>, b: DMatrix<f64>, b_w: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> PlantFamily {
        PlantFamily {
            state_matrix: StateMatrix::Affine { a0, terms: vec![] },
            b,
            b_w,
            c,
            d,
            nonlinearity: Nonlinearity::None,
            alpha: 0.0,
            d_lower: dvector![0.0],
            d_upper: dvector![1.0],
        }
    }

    fn scalar(a: f64) -> PlantFamily {
        linear(dmatrix![a], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![0.0])
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let plant = scalar(-1.0);
        let traj = integrate(
            &plant,
            &dvector![0.0],
            &GainMatrix(dmatrix![0.0]),
            &dvector![1.0],
            &DisturbanceSignal::Zero,
            1.0,
            1e-3,
        )
        .unwrap();
        assert_eq!(traj.len(), 1001);
        assert!((traj.final_state().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((traj.times[1000] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_plant_matches_matrix_exponential() {
        let a = dmatrix![0.0, 1.0, 0.0; -2.0, -0.5, 1.0; 0.0, -1.0, -1.0];
        let plant = linear(
            a.clone(),
            dmatrix![0.0; 0.0; 1.0],
            dmatrix![0.0; 0.0; 1.0],
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 1),
        );
        let x0 = dvector![1.0, -0.5, 0.25];
        let k = GainMatrix(dmatrix![-0.3, 0.2, -0.1]);
        let ac = plant.closed_loop(&dvector![0.0], &k).unwrap();
        let exact = (ac * 2.0).exp() * &x0;
        let traj = integrate(&plant, &dvector![0.0], &k, &x0, &DisturbanceSignal::Zero, 2.0, 1e-3).unwrap();
        assert!((traj.final_state().unwrap() - exact).norm() < 1e-7);
    }

    #[test]
    fn rk4_error_is_fourth_order() {
        let plant = linear(
            dmatrix![0.0, 1.0; -4.0, -0.4],
            dmatrix![0.0; 1.0],
            dmatrix![0.0; 1.0],
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
        );
        let k = GainMatrix::zeros(1, 2);
        let x0 = dvector![1.0, 0.0];
        let exact = (plant.closed_loop(&dvector![0.0], &k).unwrap() * 2.0).exp() * &x0;
        let err = |dt: f64| {
            let traj = integrate(&plant, &dvector![0.0], &k, &x0, &DisturbanceSignal::Zero, 2.0, dt).unwrap();
            (traj.final_state().unwrap() - &exact).norm()
        };
        let ratio = err(0.04) / err(0.02);
        assert!((8.0..=32.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn constant_disturbance_window() {
        let value = dvector![1.0];
        let signal = DisturbanceSignal::Constant {
            value: value.clone(),
            t_on: 0.0,
            t_off: 4.0,
        };
        assert_eq!(signal.at(3.999, 1), value);
        assert_eq!(signal.at(4.0, 1), dvector![0.0]);
        // steady state of x' = -x + 1 before the window closes
        let traj = integrate(
            &scalar(-1.0),
            &dvector![0.0],
            &GainMatrix(dmatrix![0.0]),
            &dvector![0.0],
            &signal,
            3.0,
            1e-3,
        )
        .unwrap();
        assert!((traj.final_state().unwrap()[0] - (1.0 - (-3.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn output_cost_of_exponential() {
        let times: Vec<f64> = (0..=10_000).map(|i| i as f64 * 1e-3).collect();
        let outputs = times.iter().map(|t| dvector![(-t).exp()]).collect();
        let traj = Trajectory {
            states: vec![dvector![0.0]; times.len()],
            inputs: vec![dvector![0.0]; times.len()],
            disturbance: vec![dvector![0.0]; times.len()],
            outputs,
            times,
        };
        assert!((l2_output_cost(&traj) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn divergence_is_reported() {
        let err = integrate(
            &scalar(5.0),
            &dvector![0.0],
            &GainMatrix(dmatrix![0.0]),
            &dvector![1.0],
            &DisturbanceSignal::Zero,
            10.0,
            1e-3,
        );
        match err {
            Err(Error::Diverged { time }) => assert!(time > 3.0 && time < 5.0, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_arguments() {
        let plant = scalar(-1.0);
        let k = GainMatrix(dmatrix![0.0]);
        let x0 = dvector![1.0];
        let run = |signal: &DisturbanceSignal, t_end: f64, dt: f64| {
            integrate(&plant, &dvector![0.0], &k, &x0, signal, t_end, dt)
        };
        assert!(run(&DisturbanceSignal::Zero, 1.0, 0.0).is_err());
        assert!(run(&DisturbanceSignal::Zero, 1e-4, 1e-3).is_err());
        assert!(run(&DisturbanceSignal::CanonicalInitial(1), 1.0, 1e-3).is_err());
        let backwards = DisturbanceSignal::Constant {
            value: dvector![1.0],
            t_on: 2.0,
            t_off: 1.0,
        };
        assert!(run(&backwards, 1.0, 1e-3).is_err());
    }

    #[test]
    fn scalar_trace_bound() {
        // Ac = -1, alpha = 0, Cz = 1, mu = 1: P = 1, cost 1/2
        let plant = scalar(-1.0);
        let k = GainMatrix(dmatrix![0.0]);
        let d = dvector![0.0];
        let p = solve_design_certificate(&plant, &d, &k, 1.0).unwrap();
        assert!((p.p[(0, 0)] - 1.0).abs() < 1e-12);
        let report = verify_trace_bound(&plant, &d, &k, &p, 1.0, None, 1e-3).unwrap();
        assert!(report.passed);
        assert!((report.bound - 1.0).abs() < 1e-12);
        assert!((report.total_cost - 0.5).abs() < 1e-6);
        assert_eq!(report.horizon, 20.0);
    }

    #[test]
    fn zero_disturbance_gain_gives_zero_bound() {
        let mut plant = scalar(-1.0);
        plant.b_w = dmatrix![0.0];
        let k = GainMatrix(dmatrix![0.0]);
        let d = dvector![0.0];
        let p = solve_design_certificate(&plant, &d, &k, 1.0).unwrap();
        let report = verify_trace_bound(&plant, &d, &k, &p, 1.0, Some(5.0), 1e-3).unwrap();
        assert_eq!(report.total_cost, 0.0);
        assert_eq!(report.bound, 0.0);
        assert!(report.passed);
        assert!(report.directions[0].truncated_at.is_some());
    }

    #[test]
    fn certificate_energy_decreases_along_trajectory() {
        let mut plant = linear(
            dmatrix![0.0, 1.0; -1.0, -1.0],
            dmatrix![0.0; 1.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0; 0.0; 1.0],
        );
        plant.nonlinearity = Nonlinearity::scaled_sine(1, 0, 0.2);
        plant.alpha = 0.2;
        let k = GainMatrix(dmatrix![-1.0, -1.0]);
        let d = dvector![0.0];
        let p = solve_design_certificate(&plant, &d, &k, 0.5).unwrap();
        let traj = integrate(
            &plant,
            &d,
            &k,
            &dvector![1.0, -1.0],
            &DisturbanceSignal::Zero,
            10.0,
            1e-3,
        )
        .unwrap();
        let energy: Vec<f64> = traj.states.iter().map(|x| x.dot(&(&p.p * x))).collect();
        let tol = 1e-6 * energy[0];
        assert!(energy.windows(2).all(|w| w[1] <= w[0] + tol));
    }
}

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{CoDesignConfig, MU_HALVINGS};
use crate::error::{Error, Result};
use crate::matrix_equations::{solve_lyapunov, solve_lyapunov_transposed, solve_qme, CertificateSolution};
use crate::plant::{GainMatrix, PlantFamily};

/// Solves `Ac^T P + P Ac + alpha^2 P P + I + mu Cz^T Cz = 0` with
/// `Ac = A(d) + B K`, `Cz = C + D K`, and requires `P > 0`.
pub fn solve_design_certificate(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    mu: f64,
) -> Result<CertificateSolution> {
    if !(mu > 0.0) {
        return Err(Error::Config("mu must be positive".into()));
    }
    let n = plant.n_x();
    let ac = plant.closed_loop(d, k)?;
    let cz = plant.output_map(k);
    let eye = DMatrix::<f64>::identity(n, n);
    let w = &eye * plant.alpha.powi(2);
    let v = &eye + cz.transpose() * &cz * mu;
    let cert = solve_qme(&ac, &w, &v)?;
    if !cert.is_positive_definite() {
        return Err(Error::NotPositiveDefinite(cert.min_eig));
    }
    Ok(cert)
}

/// A feasible point: objective value and its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub certificate: CertificateSolution,
}

fn output_weight_definite(plant: &PlantFamily, k: &GainMatrix) -> bool {
    let cz = plant.output_map(k);
    let gram = cz.transpose() * &cz;
    gram.clone().symmetric_eigenvalues().min() > 1e-12 * (1.0 + gram.norm())
}

/// Objective and certificate, or `None` when `(d, K)` has no certificate or
/// `Cz^T Cz` is not positive definite.
pub fn evaluate(plant: &PlantFamily, d: &DVector<f64>, k: &GainMatrix, config: &CoDesignConfig) -> Option<Evaluation> {
    if !output_weight_definite(plant, k) {
        return None;
    }
    let certificate = match solve_design_certificate(plant, d, k, config.mu_or_default()) {
        Ok(c) => c,
        Err(e) => {
            debug!("no certificate at d = {:?}: {e}", d.as_slice());
            return None;
        }
    };
    let bw_bwt = &plant.b_w * plant.b_w.transpose();
    let trace = (&certificate.p * bw_bwt).trace();
    let objective = config.beta_d * config.design_fn.value(d) + config.beta_c * trace;
    objective.is_finite().then_some(Evaluation { objective, certificate })
}

/// `beta_d f_d(d) + beta_c tr(P B_w B_w^T)`; `+inf` where no certificate exists.
pub fn objective(plant: &PlantFamily, d: &DVector<f64>, k: &GainMatrix, config: &CoDesignConfig) -> f64 {
    evaluate(plant, d, k, config).map_or(f64::INFINITY, |e| e.objective)
}

/// `Ac + alpha^2 P`, the matrix the sensitivity equations are posed in.
fn sensitivity_matrix(plant: &PlantFamily, d: &DVector<f64>, k: &GainMatrix, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(plant.closed_loop(d, k)? + p * plant.alpha.powi(2))
}

/// Gradient with respect to the design vector. Each component solves one
/// Lyapunov equation for `dP/dd_i`.
pub fn grad_d(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    p: &CertificateSolution,
    config: &CoDesignConfig,
) -> Result<DVector<f64>> {
    let mut grad = config.design_fn.gradient(d) * config.beta_d;
    if config.beta_c == 0.0 {
        return Ok(grad);
    }
    let acc = sensitivity_matrix(plant, d, k, &p.p)?;
    let bw_bwt = &plant.b_w * plant.b_w.transpose();
    for i in 0..plant.n_d() {
        let da = plant.da_dd(i, d)?;
        if da.iter().all(|v| *v == 0.0) {
            continue;
        }
        let rhs = da.transpose() * &p.p + &p.p * &da;
        let dp = solve_lyapunov(&acc, &rhs)?;
        grad[i] += config.beta_c * (dp.p * &bw_bwt).trace();
    }
    Ok(grad)
}

/// `2 beta_c (B^T P + mu R K) L` with `L Acc^T + Acc L + B_w B_w^T = 0`.
pub fn grad_k(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    p: &CertificateSolution,
    config: &CoDesignConfig,
) -> Result<DMatrix<f64>> {
    if config.beta_c == 0.0 {
        return Ok(DMatrix::zeros(plant.n_u(), plant.n_x()));
    }
    let acc = sensitivity_matrix(plant, d, k, &p.p)?;
    let bw_bwt = &plant.b_w * plant.b_w.transpose();
    let l = solve_lyapunov_transposed(&acc, &bw_bwt)?;
    let mu = config.mu_or_default();
    let inner = plant.b.transpose() * &p.p + plant.control_weight() * &k.0 * mu;
    Ok(inner * l.p * (2.0 * config.beta_c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d: DVector<f64>,
    pub k: DMatrix<f64>,
}

impl Gradients {
    /// `grad_d^T grad_d + tr(grad_K^T grad_K)`.
    pub fn squared_norm(&self) -> f64 {
        self.d.norm_squared() + self.k.norm_squared()
    }
}

pub fn gradients(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    p: &CertificateSolution,
    config: &CoDesignConfig,
) -> Result<Gradients> {
    Ok(Gradients {
        d: grad_d(plant, d, k, p, config)?,
        k: grad_k(plant, d, k, p, config)?,
    })
}

/// Largest `mu` in `start, start/2, ...` (at most [`MU_HALVINGS`] halvings)
/// admitting a certificate at `(d, K)`.
pub fn find_mu(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    start: f64,
) -> Option<(f64, CertificateSolution)> {
    let mut mu = start;
    for _ in 0..=MU_HALVINGS {
        if let Some(cert) = certify(plant, d, k, mu) {
            return Some((mu, cert));
        }
        mu *= 0.5;
    }
    None
}

/// Certificate at a fixed `mu`, subject to the same feasibility rules as
/// [`evaluate`].
pub(crate) fn certify(plant: &PlantFamily, d: &DVector<f64>, k: &GainMatrix, mu: f64) -> Option<CertificateSolution> {
    if !output_weight_definite(plant, k) {
        return None;
    }
    solve_design_certificate(plant, d, k, mu).ok()
}

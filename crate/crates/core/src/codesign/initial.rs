//! Initial stabilizing gain `K0 = Kp0 + (correction from P0)`, where `P0`
//! solves
//!
//! ```text
//! Ac0^T P0 + P0 Ac0 + alpha^2 P0 (I - B B^T / ||B||^2) P0 + (1 + eta) I = 0
//! ```
//!
//! with `Ac0 = A + B Kp0`. A solution exists when
//! `delta0(Ac0, alpha sqrt(1+eta) B^T / ||B||) > alpha sqrt(1+eta)`.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use super::objective::{certify, find_mu};
use crate::error::{Error, Result};
use crate::matrix_equations::{delta0_bisect, solve_qme, CertificateSolution, DEFAULT_BISECTION_STEPS};
use crate::plant::{is_hurwitz, GainMatrix, PlantFamily};

/// Which composition of the Riccati correction produced `K0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainForm {
    /// `K0 = Kp0 + alpha^2 Ks0 / ||B||^2`
    Scaled,
    /// `K0 = Kp0 + Ks0 / ||B||^2`, used when the scaled form has no
    /// certificate.
    Unscaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialController {
    pub k0: GainMatrix,
    pub kp0: GainMatrix,
    /// `-alpha^2 B^T P0 / 2`.
    pub ks0: GainMatrix,
    pub p0: Option<CertificateSolution>,
    pub delta0: f64,
    /// `alpha sqrt(1 + eta)`.
    pub threshold: f64,
    pub feasible: bool,
    pub gain_form: GainForm,
    /// Whether `K0` admits a design certificate for some tested `mu`.
    pub certificate_verified: bool,
}

/// Builds the initial gain on `plant` at design `d`.
///
/// Returns `feasible = false` (not an error) when `delta0` does not exceed the
/// threshold; the caller is expected to change coordinates and retry.
/// `verify_mu` selects the output weight used to confirm the composed gain;
/// `None` searches downward from 1.
pub fn synth_initial_controller(
    plant: &PlantFamily,
    d: &DVector<f64>,
    kp0: &GainMatrix,
    eta: f64,
    verify_mu: Option<f64>,
) -> Result<InitialController> {
    if !(eta > 0.0) {
        return Err(Error::Config("eta must be positive".into()));
    }
    let n = plant.n_x();
    let ac0 = plant.closed_loop(d, kp0)?;
    if !is_hurwitz(&ac0, 0.0)? {
        return Err(Error::Config("A + B Kp0 is not Hurwitz".into()));
    }
    let b = &plant.b;
    let b_norm = b.norm();
    if !(b_norm > 0.0) {
        return Err(Error::Config("B must be nonzero".into()));
    }
    let alpha2 = plant.alpha.powi(2);
    let threshold = plant.alpha * (1.0 + eta).sqrt();
    let n_mat = b.transpose() * (threshold / b_norm);
    let delta0 = delta0_bisect(&ac0, &n_mat, DEFAULT_BISECTION_STEPS)?;
    info!("delta0 = {delta0:.6}, alpha*sqrt(1+eta) = {threshold:.6}");

    if !(delta0 > threshold) {
        return Ok(InitialController {
            k0: kp0.clone(),
            kp0: kp0.clone(),
            ks0: GainMatrix::zeros(plant.n_u(), n),
            p0: None,
            delta0,
            threshold,
            feasible: false,
            gain_form: GainForm::Scaled,
            certificate_verified: false,
        });
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let w = (&eye - b * b.transpose() / (b_norm * b_norm)) * alpha2;
    let v = &eye * (1.0 + eta);
    let p0 = solve_qme(&ac0, &w, &v)?;
    if !p0.is_positive_definite() {
        return Err(Error::NotPositiveDefinite(p0.min_eig));
    }
    let ks0 = GainMatrix(-(b.transpose() * &p0.p) * (alpha2 / 2.0));

    let compose = |form: GainForm| {
        let scale = match form {
            GainForm::Scaled => alpha2,
            GainForm::Unscaled => 1.0,
        } / (b_norm * b_norm);
        GainMatrix(&kp0.0 + &ks0.0 * scale)
    };
    let certified = |k: &GainMatrix| match verify_mu {
        Some(mu) => certify(plant, d, k, mu).is_some(),
        None => find_mu(plant, d, k, 1.0).is_some(),
    };

    let scaled = compose(GainForm::Scaled);
    let (k0, gain_form, certificate_verified) = if certified(&scaled) {
        (scaled, GainForm::Scaled, true)
    } else {
        let unscaled = compose(GainForm::Unscaled);
        if certified(&unscaled) {
            info!("scaled gain composition has no certificate; using the unscaled form");
            (unscaled, GainForm::Unscaled, true)
        } else {
            warn!("initial gain has no design certificate for the requested mu");
            (scaled, GainForm::Scaled, false)
        }
    };

    Ok(InitialController {
        k0,
        kp0: kp0.clone(),
        ks0,
        p0: Some(p0),
        delta0,
        threshold,
        feasible: true,
        gain_form,
        certificate_verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{Nonlinearity, StateMatrix};
    use nalgebra::{dmatrix, dvector};

    fn linear_plant() -> PlantFamily {
        PlantFamily {
            state_matrix: StateMatrix::Affine {
                a0: dmatrix![0.0, 1.0; -2.0, -3.0],
                terms: vec![],
            },
            b: dmatrix![0.0; 1.0],
            b_w: dmatrix![1.0; 0.0],
            c: dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0],
            d: dmatrix![0.0; 0.0; 1.0],
            nonlinearity: Nonlinearity::None,
            alpha: 0.0,
            d_lower: dvector![0.0],
            d_upper: dvector![1.0],
        }
    }

    #[test]
    fn linear_plant_keeps_pole_placement_gain() {
        let plant = linear_plant();
        let kp0 = GainMatrix(dmatrix![-1.0, -0.5]);
        let init = synth_initial_controller(&plant, &dvector![0.5], &kp0, 1e-4, Some(1.0)).unwrap();
        assert!(init.feasible);
        assert_eq!(init.k0, kp0);
        assert!(init.certificate_verified);
    }

    #[test]
    fn large_lipschitz_constant_is_infeasible() {
        let mut plant = linear_plant();
        plant.alpha = 50.0;
        let init = synth_initial_controller(&plant, &dvector![0.5], &GainMatrix::zeros(1, 2), 1e-4, None).unwrap();
        assert!(!init.feasible);
        assert!(init.delta0 <= init.threshold);
        assert!(init.p0.is_none());
    }

    #[test]
    fn unstable_linear_part_is_rejected() {
        let plant = linear_plant();
        let err = synth_initial_controller(&plant, &dvector![0.5], &GainMatrix(dmatrix![5.0, 5.0]), 1e-4, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}

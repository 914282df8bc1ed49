use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PlantFamily;
use crate::error::Result;
use crate::matrix_equations::{eigenvalues, min_singular_value_complex, to_complex, C64};

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail(String),
    NotChecked(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    /// Short label: "A1".."A4" or "Lipschitz".
    pub name: &'static str,
    pub description: &'static str,
    pub status: CheckStatus,
}

/// A sampled pair violating the Lipschitz bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzWitness {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// `D^T D`.
    pub r: DMatrix<f64>,
    /// Largest sampled `||Phi(x2) - Phi(x1)|| / ||x2 - x1||`.
    pub max_sampled_ratio: f64,
    pub lipschitz_witness: Option<LipschitzWitness>,
}

impl ValidationReport {
    /// True when no check failed; unchecked items do not count.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| !matches!(c.status, CheckStatus::Fail(_)))
    }

    pub fn failed(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| matches!(c.status, CheckStatus::Fail(_)))
    }
}

const A3_TOL: f64 = 1e-10;

pub(super) fn check(plant: &PlantFamily, probe_count: usize, seed: u64) -> Result<ValidationReport> {
    plant.validate()?;
    let n = plant.n_x();
    let mut checks = vec![AssumptionCheck {
        name: "A1",
        description: "(A, B), (A, B_w) structurally stabilizable",
        status: CheckStatus::NotChecked("existence over the design space is not verified".into()),
    }];

    // A2: PBH rank test on the unstable modes at the midpoint design
    let d_mid = (&plant.d_lower + &plant.d_upper) * 0.5;
    let a = plant.assemble_a(&d_mid)?;
    let scale = 1.0 + a.norm() + plant.c.norm();
    let mut undetectable = Vec::new();
    for lambda in eigenvalues(&a)? {
        if lambda.re < 0.0 {
            continue;
        }
        let mut stacked = DMatrix::<C64>::zeros(n + plant.n_z(), n);
        stacked
            .view_mut((0, 0), (n, n))
            .copy_from(&(DMatrix::<C64>::identity(n, n) * lambda - to_complex(&a)));
        stacked
            .view_mut((n, 0), (plant.n_z(), n))
            .copy_from(&to_complex(&plant.c));
        let sigma = min_singular_value_complex(&stacked);
        if sigma <= 1e-9 * scale {
            undetectable.push(format!("{lambda:.4}"));
        }
    }
    checks.push(AssumptionCheck {
        name: "A2",
        description: "(A, C) detectable",
        status: if undetectable.is_empty() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail(format!("unobservable unstable modes: {}", undetectable.join(", ")))
        },
    });

    // A3: D^T [D C] = [R 0] with R > 0
    let r = plant.control_weight();
    let cross = (plant.d.transpose() * &plant.c).norm();
    let r_min = if r.is_empty() {
        0.0
    } else {
        r.clone().symmetric_eigenvalues().min()
    };
    let a3 = if cross > A3_TOL {
        CheckStatus::Fail(format!("||D^T C|| = {cross:.3e} is not zero"))
    } else if !(r_min > A3_TOL) {
        CheckStatus::Fail(format!(
            "R = D^T D is not positive definite (min eigenvalue {r_min:.3e})"
        ))
    } else {
        CheckStatus::Pass
    };
    checks.push(AssumptionCheck {
        name: "A3",
        description: "D^T [D C] = [R 0], R > 0",
        status: a3,
    });

    // A4
    let phi0 = plant.eval_phi(&DVector::zeros(n)).norm();
    checks.push(AssumptionCheck {
        name: "A4",
        description: "Phi(0) = 0",
        status: if phi0 <= 1e-12 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail(format!("||Phi(0)|| = {phi0:.3e}"))
        },
    });

    let (max_ratio, witness) = sample_lipschitz(plant, probe_count, seed);
    checks.push(AssumptionCheck {
        name: "Lipschitz",
        description: "||Phi(x2) - Phi(x1)|| <= alpha ||x2 - x1|| on sampled pairs",
        status: match &witness {
            None => CheckStatus::Pass,
            Some(w) => CheckStatus::Fail(format!(
                "ratio {:.6} exceeds alpha = {:.6} at x1 = {:?}, x2 = {:?}",
                w.ratio,
                plant.alpha,
                w.x1.as_slice(),
                w.x2.as_slice()
            )),
        },
    });

    Ok(ValidationReport {
        checks,
        r,
        max_sampled_ratio: max_ratio,
        lipschitz_witness: witness,
    })
}

/// Probes coordinate steps away from the origin (where a sine has its largest
/// slope), small random steps around random points and random far pairs.
fn sample_lipschitz(plant: &PlantFamily, probe_count: usize, seed: u64) -> (f64, Option<LipschitzWitness>) {
    let n = plant.n_x();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(n + probe_count);
    for i in 0..n {
        let mut step = DVector::zeros(n);
        step[i] = 1e-6;
        pairs.push((DVector::zeros(n), step));
    }
    for k in 0..probe_count {
        let x1 = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        let x2 = if k % 2 == 0 {
            let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            &x1 + dir * 1e-4
        } else {
            DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0))
        };
        pairs.push((x1, x2));
    }

    let limit = plant.alpha * (1.0 + 1e-9);
    let mut max_ratio: f64 = 0.0;
    let mut witness: Option<LipschitzWitness> = None;
    for (x1, x2) in pairs {
        let dx = (&x2 - &x1).norm();
        if dx == 0.0 {
            continue;
        }
        let ratio = (plant.eval_phi(&x2) - plant.eval_phi(&x1)).norm() / dx;
        max_ratio = max_ratio.max(ratio);
        if ratio > limit && witness.as_ref().is_none_or(|w| ratio > w.ratio) {
            witness = Some(LipschitzWitness { x1, x2, ratio });
        }
    }
    (max_ratio, witness)
}

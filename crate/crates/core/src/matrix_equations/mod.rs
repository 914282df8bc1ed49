//! Dense Lyapunov and quadratic matrix equation solvers, hyperbolicity tests
//! and the `delta0` distance used by the initial-controller condition.

mod delta0;
mod eigen;
mod lyapunov;
mod qme;

use nalgebra::DMatrix;

pub use delta0::{
    delta0_bisect, delta0_bracket, delta0_grid_oracle, delta_hamiltonian, Delta0Bracket, DEFAULT_BISECTION_STEPS,
};
pub use eigen::{
    default_axis_tol, eigenvalues, eigenvector, is_hyperbolic, min_singular_value_complex, spectral_norm,
    HyperbolicityReport, C64,
};
pub use lyapunov::{solve_lyapunov, solve_lyapunov_transposed};
pub use qme::{hamiltonian, solve_qme};

pub(crate) use eigen::to_complex;

/// Symmetric solution of a matrix equation together with its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of the equation residual at `p`.
    pub residual_norm: f64,
    /// Smallest eigenvalue of `p`.
    pub min_eig: f64,
}

impl CertificateSolution {
    pub(crate) fn new(p: DMatrix<f64>, residual_norm: f64) -> Self {
        let min_eig = p.clone().symmetric_eigenvalues().min();
        Self {
            p,
            residual_norm,
            min_eig,
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eig > 0.0
    }
}

/// Largest real part over the spectrum.
pub fn max_real_part(m: &DMatrix<f64>) -> crate::Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

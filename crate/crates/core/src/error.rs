use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{0} must be symmetric")]
    NotSymmetric(&'static str),

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("spectrum violates solvability: eigenvalues {0} and {1} sum to (nearly) zero")]
    LyapunovUnsolvable(String, String),

    /// The Hamiltonian has eigenvalues on the imaginary axis, so no stabilizing
    /// solution of the quadratic matrix equation exists.
    #[error("no certificate exists: Hamiltonian is not hyperbolic (min |Re λ| = {min_abs_real:.3e})")]
    NoCertificate { min_abs_real: f64 },

    #[error("invariant subspace basis is ill-conditioned (cond = {0:.3e})")]
    IllConditioned(f64),

    #[error("certificate has a non-negligible imaginary part ({0:.3e})")]
    ComplexCertificate(f64),

    #[error("certificate residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    InaccurateCertificate { residual: f64, tolerance: f64 },

    #[error("certificate is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("transformation matrix is singular")]
    SingularTransform,

    #[error("pole placement supports single-input systems only (n_u = {0})")]
    MultiInput(usize),

    #[error("(A, B) is not controllable")]
    Uncontrollable,

    #[error("invalid pole set: {0}")]
    InvalidPoles(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "initial controller synthesis infeasible: delta0 = {delta0:.6} <= alpha*sqrt(1+eta) = {threshold:.6}; choose a different transform"
    )]
    Infeasible { delta0: f64, threshold: f64 },

    #[error("no output weight mu admits a certificate at the starting point")]
    NoFeasibleMu,

    #[error("state diverged at t = {time}")]
    Diverged { time: f64 },
}

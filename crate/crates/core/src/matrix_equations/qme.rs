//! Stabilizing solution of `F^T P + P F + P W P + V = 0` from the stable
//! invariant subspace of the Hamiltonian `[[F, W], [-V, -F^T]]`.
//!
//! The subspace is assembled from eigenvectors (grouped for repeated
//! eigenvalues) rather than an ordered Schur form. That is adequate for the
//! small dense problems here but loses accuracy when the Hamiltonian has
//! eigenvalues close to the imaginary axis or the basis `X` is badly
//! conditioned; both cases are reported as errors instead of returning a
//! poor certificate.

use nalgebra::DMatrix;

use super::eigen::{self, condition_number, ensure_finite, ensure_square, C64};
use super::CertificateSolution;
use crate::error::{Error, Result};

const MAX_BASIS_CONDITION: f64 = 1e12;
const RESIDUAL_TOL: f64 = 1e-8;

pub fn hamiltonian(f: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(f);
    h.view_mut((0, n), (n, n)).copy_from(w);
    h.view_mut((n, 0), (n, n)).copy_from(&(-v));
    h.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));
    h
}

pub fn solve_qme(f: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<CertificateSolution> {
    let n = ensure_square(f, "F")?;
    for (m, name) in [(w, "W"), (v, "V")] {
        if m.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "{name} must be {n}x{n}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    ensure_finite(f, "F")?;
    ensure_finite(w, "W")?;
    ensure_finite(v, "V")?;
    if (w - w.transpose()).norm() > 1e-10 * (1.0 + w.norm()) {
        return Err(Error::NotSymmetric("W"));
    }
    if (v - v.transpose()).norm() > 1e-10 * (1.0 + v.norm()) {
        return Err(Error::NotSymmetric("V"));
    }

    let h = hamiltonian(f, w, v);
    let h_norm = eigen::spectral_norm(&h);
    let axis_tol = 1e-7 * (1.0 + h_norm);
    let spectrum = eigen::eigenvalues(&h)?;
    let min_abs_real = spectrum.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    if min_abs_real <= axis_tol {
        return Err(Error::NoCertificate { min_abs_real });
    }
    let stable: Vec<C64> = spectrum.into_iter().filter(|l| l.re < -axis_tol).collect();
    if stable.len() != n {
        // a Hamiltonian spectrum is symmetric about the imaginary axis
        return Err(Error::NoCertificate { min_abs_real });
    }

    let basis = eigen::invariant_subspace(&h, &stable, 1e-6 * (1.0 + h_norm));
    let x = basis.rows(0, n).into_owned();
    let y = basis.rows(n, n).into_owned();
    let cond = condition_number(&x);
    if !(cond <= MAX_BASIS_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let x_inv = x.try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let p_complex = y * x_inv;

    let re = p_complex.map(|c| c.re);
    let im_norm = p_complex.map(|c| c.im).norm();
    if im_norm > 1e-8 * re.norm() + 1e-14 {
        return Err(Error::ComplexCertificate(im_norm));
    }
    let p = (&re + re.transpose()) * 0.5;

    let residual = (f.transpose() * &p + &p * f + &p * w * &p + v).norm();
    let p_norm = p.norm();
    let scale = 1.0 + 2.0 * f.norm() * p_norm + w.norm() * p_norm * p_norm + v.norm();
    let tolerance = RESIDUAL_TOL * scale;
    if residual > tolerance {
        return Err(Error::InaccurateCertificate { residual, tolerance });
    }
    Ok(CertificateSolution::new(p, residual))
}

use nalgebra::{DMatrix, DVector};

use super::GainMatrix;
use crate::error::{Error, Result};
use crate::matrix_equations::C64;

/// Ackermann pole placement for `u = K x`: `K = -e_n^T Ctrb^-1 p(A)`, where
/// `p` is the desired characteristic polynomial.
pub fn place_poles(a: &DMatrix<f64>, b: &DMatrix<f64>, desired: &[C64]) -> Result<GainMatrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension("A must be n x n and B must have n rows".into()));
    }
    if b.ncols() != 1 {
        return Err(Error::MultiInput(b.ncols()));
    }
    if desired.len() != n {
        return Err(Error::InvalidPoles(format!(
            "expected {n} poles, got {}",
            desired.len()
        )));
    }
    let coeffs = real_characteristic_polynomial(desired)?;

    let mut ctrb = DMatrix::zeros(n, n);
    let mut col: DVector<f64> = b.column(0).into_owned();
    for k in 0..n {
        ctrb.set_column(k, &col);
        col = a * col;
    }
    let sv = ctrb.clone().svd(false, false).singular_values;
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::Uncontrollable);
    }

    // p(A) = A^n + c_1 A^(n-1) + ... + c_n I by Horner
    let eye = DMatrix::<f64>::identity(n, n);
    let mut p_a = eye.clone();
    for c in &coeffs[1..] {
        p_a = a * p_a + &eye * *c;
    }

    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = 1.0;
    // row = e_n^T Ctrb^-1, i.e. Ctrb^T row^T = e_n
    let row = ctrb.transpose().lu().solve(&e_n).ok_or(Error::Uncontrollable)?;
    let k = -(row.transpose() * p_a);
    Ok(GainMatrix(DMatrix::from_row_slice(1, n, k.as_slice())))
}

/// Monic polynomial coefficients (highest degree first) with the given roots,
/// which must be closed under conjugation.
fn real_characteristic_polynomial(roots: &[C64]) -> Result<Vec<f64>> {
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let mut unmatched: Vec<C64> = roots.iter().copied().filter(|r| r.im.abs() > tol).collect();
    while let Some(r) = unmatched.pop() {
        match unmatched.iter().position(|o| (*o - r.conj()).norm() <= tol) {
            Some(idx) => {
                unmatched.swap_remove(idx);
            }
            None => return Err(Error::InvalidPoles(format!("{r} has no conjugate partner"))),
        }
    }
    if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::InvalidPoles("non-finite pole".into()));
    }

    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    Ok(coeffs.into_iter().map(|c| c.re).collect())
}

//! Bartels-Stewart solver for continuous Lyapunov equations on the real
//! Schur form.

use nalgebra::{DMatrix, Schur};

use super::eigen::{ensure_finite, ensure_square};
use super::CertificateSolution;
use crate::error::{Error, Result};

/// Solves `F^T X + X F + Q = 0`.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<CertificateSolution> {
    let n = ensure_square(f, "F")?;
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    ensure_finite(f, "F")?;
    ensure_finite(q, "Q")?;
    if (q - q.transpose()).norm() > 1e-10 * (1.0 + q.norm()) {
        return Err(Error::NotSymmetric("Q"));
    }

    let schur = Schur::try_new(f.clone(), f64::EPSILON, 10_000 * n).ok_or(Error::EigenNonConvergence(n))?;
    check_solvable(&schur, f.norm())?;
    let (u, s) = schur.unpack();

    let q_tilde = u.transpose() * q * &u;
    let y = solve_quasi_triangular(&s, &q_tilde)?;
    let x = &u * y * u.transpose();
    let x = (&x + x.transpose()) * 0.5;

    let residual = f.transpose() * &x + &x * f + q;
    Ok(CertificateSolution::new(x, residual.norm()))
}

/// Solves the transposed variant `X F^T + F X + Q = 0`.
pub fn solve_lyapunov_transposed(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<CertificateSolution> {
    solve_lyapunov(&f.transpose(), q)
}

fn check_solvable(schur: &Schur<f64, nalgebra::Dyn>, scale: f64) -> Result<()> {
    let ev = schur.complex_eigenvalues();
    let tol = 1e-10 * (1.0 + scale);
    for i in 0..ev.len() {
        for j in i..ev.len() {
            if (ev[i] + ev[j]).norm() <= tol {
                return Err(Error::LyapunovUnsolvable(ev[i].to_string(), ev[j].to_string()));
            }
        }
    }
    Ok(())
}

/// Diagonal blocks (start, size) of a real quasi-upper-triangular matrix.
fn schur_blocks(s: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = s.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `S^T Y + Y S + Q = 0` for quasi-upper-triangular `S`, sweeping block
/// rows top to bottom and block columns left to right.
fn solve_quasi_triangular(s: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let blocks = schur_blocks(s);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(ri, p) in &blocks {
        for &(cj, qn) in &blocks {
            let mut rhs = -q.view((ri, cj), (p, qn)).into_owned();
            if ri > 0 {
                rhs -= s.view((0, ri), (ri, p)).transpose() * y.view((0, cj), (ri, qn));
            }
            if cj > 0 {
                rhs -= y.view((ri, 0), (p, cj)) * s.view((0, cj), (cj, qn));
            }
            let z = solve_small_sylvester(
                &s.view((ri, ri), (p, p)).into_owned(),
                &s.view((cj, cj), (qn, qn)).into_owned(),
                &rhs,
            )?;
            y.view_mut((ri, cj), (p, qn)).copy_from(&z);
        }
    }
    Ok(y)
}

/// `S_a^T Z + Z S_b = C` for blocks of size at most 2, via the Kronecker form.
fn solve_small_sylvester(sa: &DMatrix<f64>, sb: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = (sa.nrows(), sb.nrows());
    let m = p * q;
    let mut k = DMatrix::<f64>::zeros(m, m);
    // vec is column-major: index (r, c) -> c * p + r
    for col in 0..q {
        for r in 0..p {
            let row = col * p + r;
            for rr in 0..p {
                k[(row, col * p + rr)] += sa[(rr, r)];
            }
            for cc in 0..q {
                k[(row, cc * p + r)] += sb[(cc, col)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LyapunovUnsolvable("block".into(), "block".into()))?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

//! Dense eigenvalue helpers shared by the Hurwitz, hyperbolicity and
//! invariant-subspace code paths.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const SCHUR_MAX_SWEEPS: usize = 10_000;

/// Result of an imaginary-axis test on a square matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicityReport {
    pub is_hyperbolic: bool,
    /// Smallest |Re λ| over the spectrum.
    pub min_abs_real: f64,
}

pub(crate) fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// All eigenvalues of a real square matrix, from its real Schur form.
///
/// Conjugate pairs are returned adjacently; the order otherwise follows the
/// diagonal of the Schur factor.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    let n = ensure_square(m, "matrix")?;
    ensure_finite(m, "eigenvalue input")?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_SWEEPS * n).ok_or(Error::EigenNonConvergence(n))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Default imaginary-axis margin, `1e-7 * (1 + ||H||_2)`.
pub fn default_axis_tol(h: &DMatrix<f64>) -> f64 {
    1e-7 * (1.0 + spectral_norm(h))
}

pub fn is_hyperbolic(h: &DMatrix<f64>, im_axis_tol: f64) -> Result<HyperbolicityReport> {
    let min_abs_real = eigenvalues(h)?.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    Ok(HyperbolicityReport {
        is_hyperbolic: min_abs_real > im_axis_tol,
        min_abs_real,
    })
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// Right singular vectors belonging to the `count` smallest singular values,
/// as columns.
fn smallest_right_singular_vectors(m: DMatrix<C64>, count: usize) -> DMatrix<C64> {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = DMatrix::zeros(n, count);
    for (col, &idx) in order.iter().take(count).enumerate() {
        for r in 0..n {
            out[(r, col)] = v_t[(idx, r)].conj();
        }
    }
    out
}

/// Unit eigenvector for an (approximate) eigenvalue `lambda` of `m`: the right
/// singular vector of `m - lambda I` with the smallest singular value.
pub fn eigenvector(m: &DMatrix<f64>, lambda: C64) -> DVector<C64> {
    let n = m.nrows();
    let shifted = to_complex(m) - DMatrix::<C64>::identity(n, n) * lambda;
    smallest_right_singular_vectors(shifted, 1).column(0).into_owned()
}

/// Basis of the invariant subspace associated with the given eigenvalues.
///
/// Eigenvalues closer than `cluster_tol` are grouped; for a group of size `m`
/// the basis is the `m`-dimensional null space of `prod (A - λ_i I)`, which
/// reduces to the ordinary eigenvector for a simple eigenvalue and also covers
/// repeated or defective ones.
pub(crate) fn invariant_subspace(m: &DMatrix<f64>, selected: &[C64], cluster_tol: f64) -> DMatrix<C64> {
    let n = m.nrows();
    let mc = to_complex(m);
    let eye = DMatrix::<C64>::identity(n, n);

    let mut cluster_of: Vec<usize> = (0..selected.len()).collect();
    // single-linkage grouping
    for i in 0..selected.len() {
        for j in 0..i {
            if (selected[i] - selected[j]).norm() <= cluster_tol {
                let (from, to) = (cluster_of[i], cluster_of[j]);
                for c in cluster_of.iter_mut() {
                    if *c == from {
                        *c = to;
                    }
                }
            }
        }
    }

    let mut basis = DMatrix::<C64>::zeros(n, selected.len());
    let mut col = 0;
    let mut seen = Vec::new();
    for &root in &cluster_of {
        if seen.contains(&root) {
            continue;
        }
        seen.push(root);
        let members: Vec<C64> = selected
            .iter()
            .zip(&cluster_of)
            .filter(|(_, &c)| c == root)
            .map(|(l, _)| *l)
            .collect();
        let mut product = eye.clone();
        for l in &members {
            product = (&mc - &eye * *l) * product;
        }
        let vecs = smallest_right_singular_vectors(product, members.len());
        basis.columns_mut(col, members.len()).copy_from(&vecs);
        col += members.len();
    }
    basis
}

/// Smallest singular value of a (tall) complex matrix, from the smallest
/// eigenvalue of its Hermitian Gram matrix.
pub fn min_singular_value_complex(m: &DMatrix<C64>) -> f64 {
    let gram = m.adjoint() * m;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.min().max(0.0).sqrt()
}

/// 2-norm condition number of a complex square matrix.
pub(crate) fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let ev = sorted(eigenvalues(&dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap());
        assert!((ev[0] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues() {
        let ev = sorted(eigenvalues(&dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap());
        assert!((ev[0].re + 2.0).abs() < 1e-12 && (ev[1].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvector_residual_is_small() {
        let m = dmatrix![1.0, 2.0, 0.5; -3.0, 0.1, 4.0; 0.2, -1.0, -2.0];
        let norm = spectral_norm(&m);
        let mc = to_complex(&m);
        for l in eigenvalues(&m).unwrap() {
            let v = eigenvector(&m, l);
            let r = &mc * &v - &v * l;
            assert!(r.norm() <= 1e-8 * norm, "residual {}", r.norm());
        }
    }

    #[test]
    fn hyperbolicity_examples() {
        let tol = 1e-9;
        assert!(
            !is_hyperbolic(&dmatrix![0.0, 1.0; -1.0, 0.0], tol)
                .unwrap()
                .is_hyperbolic
        );
        let r = is_hyperbolic(&dmatrix![-3.0, 1.0; 0.0, 3.0], tol).unwrap();
        assert!(r.is_hyperbolic);
        assert!((r.min_abs_real - 3.0).abs() < 1e-12);
        assert!(
            !is_hyperbolic(&dmatrix![-3.0, 1.0; -11.0, 3.0], tol)
                .unwrap()
                .is_hyperbolic
        );
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(eigenvalues(&DMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn repeated_eigenvalue_subspace_has_full_rank() {
        let m = dmatrix![-1.0, 0.0, 0.0; 0.0, -1.0, 0.0; 0.0, 0.0, 2.0];
        let basis = invariant_subspace(&m, &[C64::new(-1.0, 0.0), C64::new(-1.0, 0.0)], 1e-6);
        let top = basis.rows(0, 2).into_owned();
        assert!(condition_number(&top) < 10.0);
        assert!(basis.row(2).norm() < 1e-12);
    }

    #[test]
    fn smallest_singular_value_of_stacked_matrix() {
        // [i*0 + 3; 4] has sigma = 5
        let m = DMatrix::from_row_slice(2, 1, &[C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
        assert!((min_singular_value_complex(&m) - 5.0).abs() < 1e-12);
    }
}

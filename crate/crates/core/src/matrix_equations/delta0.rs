//! `delta0(M, N) = min_w sigma_min([i w I - M; N])`, by Hamiltonian bisection
//! and by direct frequency sampling.

use nalgebra::DMatrix;

use super::eigen::{self, ensure_square, min_singular_value_complex, to_complex, C64};
use crate::error::{Error, Result};

pub const DEFAULT_BISECTION_STEPS: usize = 40;

/// Final bracket of the bisection; `value` is the last midpoint tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta0Bracket {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
}

fn check_shapes(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<usize> {
    let dim = ensure_square(m, "M")?;
    if n.ncols() != dim {
        return Err(Error::Dimension(format!(
            "N must have {dim} columns, got {}",
            n.ncols()
        )));
    }
    Ok(dim)
}

/// `[[M, I], [N^T N - delta^2 I, -M^T]]`; hyperbolic iff `delta < delta0`.
pub fn delta_hamiltonian(m: &DMatrix<f64>, n: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let dim = m.nrows();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut h = DMatrix::zeros(2 * dim, 2 * dim);
    h.view_mut((0, 0), (dim, dim)).copy_from(m);
    h.view_mut((0, dim), (dim, dim)).copy_from(&eye);
    h.view_mut((dim, 0), (dim, dim))
        .copy_from(&(n.transpose() * n - eye * (delta * delta)));
    h.view_mut((dim, dim), (dim, dim)).copy_from(&(-m.transpose()));
    h
}

pub fn delta0_bracket(m: &DMatrix<f64>, n: &DMatrix<f64>, iterations: usize) -> Result<Delta0Bracket> {
    check_shapes(m, n)?;
    if iterations == 0 {
        return Err(Error::Config("delta0 bisection needs at least one iteration".into()));
    }
    let mut lower = 0.0;
    let mut upper = eigen::spectral_norm(m) + eigen::spectral_norm(n);
    let mut value = 0.5 * (lower + upper);
    for _ in 0..iterations {
        value = 0.5 * (lower + upper);
        let h = delta_hamiltonian(m, n, value);
        if eigen::is_hyperbolic(&h, eigen::default_axis_tol(&h))?.is_hyperbolic {
            lower = value;
        } else {
            upper = value;
        }
    }
    Ok(Delta0Bracket { lower, upper, value })
}

/// Bisection estimate of `delta0(M, N)` after exactly `iterations` halvings of
/// `[0, ||M||_2 + ||N||_2]`.
pub fn delta0_bisect(m: &DMatrix<f64>, n: &DMatrix<f64>, iterations: usize) -> Result<f64> {
    Ok(delta0_bracket(m, n, iterations)?.value)
}

/// Minimum of `sigma_min([i w I - M; N])` over a symmetric grid of `steps`
/// frequencies on `[-omega_max, omega_max]`. Cross-check only.
pub fn delta0_grid_oracle(m: &DMatrix<f64>, n: &DMatrix<f64>, omega_max: f64, steps: usize) -> Result<f64> {
    let dim = check_shapes(m, n)?;
    if steps < 2 || !(omega_max > 0.0) {
        return Err(Error::Config("grid oracle needs steps >= 2 and omega_max > 0".into()));
    }
    let rows = dim + n.nrows();
    let mut stacked = DMatrix::<C64>::zeros(rows, dim);
    stacked.view_mut((0, 0), (dim, dim)).copy_from(&(-to_complex(m)));
    stacked.view_mut((dim, 0), (n.nrows(), dim)).copy_from(&to_complex(n));
    let base_diag: Vec<C64> = (0..dim).map(|i| stacked[(i, i)]).collect();

    let mut best = f64::INFINITY;
    for k in 0..steps {
        let omega = -omega_max + 2.0 * omega_max * k as f64 / (steps - 1) as f64;
        for (i, d) in base_diag.iter().enumerate() {
            stacked[(i, i)] = d + C64::new(0.0, omega);
        }
        best = best.min(min_singular_value_complex(&stacked));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_analytic_values() {
        let iters = DEFAULT_BISECTION_STEPS;
        let d = delta0_bisect(&dmatrix![-1.0], &dmatrix![0.0], iters).unwrap();
        assert!((d - 1.0).abs() <= 2f64.powi(-(iters as i32)) * 1.0 + 1e-12);
        let d = delta0_bisect(&dmatrix![-3.0], &dmatrix![4.0], iters).unwrap();
        assert!((d - 5.0).abs() < 1e-9);
    }

    #[test]
    fn grid_oracle_analytic_values() {
        let g = delta0_grid_oracle(&dmatrix![-1.0], &dmatrix![0.0], 10.0, 1001).unwrap();
        assert!((g - 1.0).abs() < 1e-3);
        let g = delta0_grid_oracle(&dmatrix![-3.0], &dmatrix![4.0], 10.0, 1001).unwrap();
        assert!((g - 5.0).abs() < 1e-3);
    }

    #[test]
    fn hamiltonian_layout() {
        let h = delta_hamiltonian(&dmatrix![-3.0], &dmatrix![4.0], 4.0);
        assert_eq!(h, dmatrix![-3.0, 1.0; 0.0, 3.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(delta0_bisect(&dmatrix![-1.0], &dmatrix![0.0], 0).is_err());
        assert!(delta0_bisect(&dmatrix![-1.0], &dmatrix![0.0, 1.0], 5).is_err());
        assert!(delta0_grid_oracle(&dmatrix![-1.0], &dmatrix![0.0], 1.0, 1).is_err());
    }
}

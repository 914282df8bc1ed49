//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use codesign_core::codesign::{objective, CoDesignConfig};
use codesign_core::plant::{GainMatrix, Nonlinearity, PlantFamily, StateMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `F^T X + X F + Q = 0` through the `n^2 x n^2` Kronecker system.
pub fn kronecker_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    let op = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = op.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    (&m + m.transpose()) * 0.5
}

pub fn max_real(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Shifts a random matrix so its spectrum lies left of `-margin`.
pub fn random_hurwitz<R: Rng>(rng: &mut R, n: usize, margin: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    let shift = (max_real(&m) + margin).max(0.0);
    m - DMatrix::identity(n, n) * shift
}

/// A small plant with output structure `C = [I; 0]`, `D = [0; I]`, one
/// affine design term, and a scaled-sine nonlinearity.
pub fn random_plant<R: Rng>(rng: &mut R, n_x: usize, n_u: usize, alpha: f64) -> PlantFamily {
    let a0 = random_hurwitz(rng, n_x, 1.0);
    let term = random_matrix(rng, n_x, n_x, 0.5);
    let mut c = DMatrix::zeros(n_x + n_u, n_x);
    c.view_mut((0, 0), (n_x, n_x)).fill_with_identity();
    let mut d = DMatrix::zeros(n_x + n_u, n_u);
    d.view_mut((n_x, 0), (n_u, n_u)).fill_with_identity();
    let slot = rng.random_range(0..n_x);
    let arg = rng.random_range(0..n_x);
    PlantFamily {
        state_matrix: StateMatrix::Affine {
            a0,
            terms: vec![(0, term)],
        },
        b: random_matrix(rng, n_x, n_u, 1.0),
        b_w: random_matrix(rng, n_x, 1, 1.0),
        c,
        d,
        nonlinearity: Nonlinearity::scaled_sine(slot, arg, alpha),
        alpha,
        d_lower: DVector::from_element(1, -1.0),
        d_upper: DVector::from_element(1, 1.0),
    }
}

/// Central differences of the objective with respect to `d` and `K`.
pub fn fd_gradients(
    plant: &PlantFamily,
    d: &DVector<f64>,
    k: &GainMatrix,
    config: &CoDesignConfig,
    rel_step: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let f = |d: &DVector<f64>, k: &DMatrix<f64>| objective(plant, d, &GainMatrix(k.clone()), config);
    let mut gd = DVector::zeros(d.len());
    for i in 0..d.len() {
        let h = rel_step * d[i].abs().max(1e-3);
        let mut up = d.clone();
        let mut down = d.clone();
        up[i] += h;
        down[i] -= h;
        gd[i] = (f(&up, &k.0) - f(&down, &k.0)) / (2.0 * h);
    }
    let mut gk = DMatrix::zeros(k.0.nrows(), k.0.ncols());
    for idx in 0..k.0.len() {
        let h = rel_step * k.0[idx].abs().max(1e-2);
        let mut up = k.0.clone();
        let mut down = k.0.clone();
        up[idx] += h;
        down[idx] -= h;
        gk[idx] = (f(d, &up) - f(d, &down)) / (2.0 * h);
    }
    (gd, gk)
}

/// `||a - b|| / max(||b||, floor)` over the stacked vector.
pub fn relative_error(a: (&DVector<f64>, &DMatrix<f64>), b: (&DVector<f64>, &DMatrix<f64>), floor: f64) -> f64 {
    let diff = ((a.0 - b.0).norm_squared() + (a.1 - b.1).norm_squared()).sqrt();
    let scale = (b.0.norm_squared() + b.1.norm_squared()).sqrt();
    diff / scale.max(floor)
}

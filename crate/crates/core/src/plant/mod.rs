//! Design-parameterized Lipschitz plant `x' = A(d) x + B u + Phi(x) + B_w w`,
//! `z = C x + D u`, together with the similarity transform used to shrink the
//! effective Lipschitz constant.

mod assumptions;
mod poles;

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix_equations::{max_real_part, spectral_norm};

pub use assumptions::{AssumptionCheck, CheckStatus, LipschitzWitness, ValidationReport};
pub use poles::place_poles;

pub type DesignVector = DVector<f64>;

pub type StateMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type PhiFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// State-feedback gain, `u = K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(pub DMatrix<f64>);

impl GainMatrix {
    pub fn zeros(n_u: usize, n_x: usize) -> Self {
        Self(DMatrix::zeros(n_u, n_x))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// How `A` depends on the design vector.
#[derive(Clone)]
pub enum StateMatrix {
    /// `A(d) = A0 + sum_k d[index_k] * A_k`.
    Affine {
        a0: DMatrix<f64>,
        terms: Vec<(usize, DMatrix<f64>)>,
    },
    /// Black-box map; derivatives by central differences.
    Custom { n_x: usize, map: StateMatrixFn },
}

impl fmt::Debug for StateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Affine { a0, terms } => f.debug_struct("Affine").field("a0", a0).field("terms", terms).finish(),
            Self::Custom { n_x, .. } => f.debug_struct("Custom").field("n_x", n_x).finish_non_exhaustive(),
        }
    }
}

/// State nonlinearity `Phi`, with `Phi(0) = 0`.
#[derive(Clone)]
pub enum Nonlinearity {
    None,
    /// `Phi_slot(x) = gain * sin(arg_scale * x_arg)`, all other components 0.
    ScaledSine {
        slot: usize,
        arg_index: usize,
        gain: f64,
        arg_scale: f64,
    },
    /// User-supplied map. The plant's `alpha` must bound its Lipschitz constant.
    Custom(PhiFn),
    /// `T^-1 Phi(T phi)` for a general coordinate change.
    Transformed {
        inner: Box<Nonlinearity>,
        transform: Transform,
    },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::ScaledSine {
                slot,
                arg_index,
                gain,
                arg_scale,
            } => f
                .debug_struct("ScaledSine")
                .field("slot", slot)
                .field("arg_index", arg_index)
                .field("gain", gain)
                .field("arg_scale", arg_scale)
                .finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
            Self::Transformed { inner, transform } => f
                .debug_struct("Transformed")
                .field("inner", inner)
                .field("transform", transform)
                .finish(),
        }
    }
}

impl Nonlinearity {
    pub fn scaled_sine(slot: usize, arg_index: usize, gain: f64) -> Self {
        Self::ScaledSine {
            slot,
            arg_index,
            gain,
            arg_scale: 1.0,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::None => DVector::zeros(x.len()),
            Self::ScaledSine {
                slot,
                arg_index,
                gain,
                arg_scale,
            } => {
                let mut out = DVector::zeros(x.len());
                out[*slot] = gain * (arg_scale * x[*arg_index]).sin();
                out
            }
            Self::Custom(f) => f(x),
            Self::Transformed { inner, transform } => &transform.t_inv * inner.eval(&(&transform.t * x)),
        }
    }

    /// Exact Lipschitz constant where the catalog knows it.
    pub fn catalog_lipschitz(&self) -> Option<f64> {
        match self {
            Self::None => Some(0.0),
            Self::ScaledSine { gain, arg_scale, .. } => Some((gain * arg_scale).abs()),
            _ => None,
        }
    }

    fn is_catalog(&self) -> bool {
        matches!(self, Self::None | Self::ScaledSine { .. })
    }
}

/// Nonsingular coordinate change `x = T phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
}

impl Transform {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        let n = t.nrows();
        if t.ncols() != n || n == 0 {
            return Err(Error::Dimension("transform must be square".into()));
        }
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("transform"));
        }
        let t_inv = t.clone().try_inverse().ok_or(Error::SingularTransform)?;
        let err = (&t * &t_inv - DMatrix::<f64>::identity(n, n)).norm();
        if !(err <= 1e-10 * n as f64) {
            return Err(Error::SingularTransform);
        }
        Ok(Self { t, t_inv })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            t: DMatrix::identity(n, n),
            t_inv: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.t == DMatrix::<f64>::identity(self.dim(), self.dim())
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.t[(i, j)] == 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct PlantFamily {
    pub state_matrix: StateMatrix,
    pub b: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub nonlinearity: Nonlinearity,
    /// Lipschitz constant of `Phi` (1/time).
    pub alpha: f64,
    pub d_lower: DVector<f64>,
    pub d_upper: DVector<f64>,
}

impl PlantFamily {
    pub fn n_x(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_w(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn n_z(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_d(&self) -> usize {
        self.d_lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_x();
        if n == 0 {
            return Err(Error::Dimension("plant needs at least one state".into()));
        }
        let dim_err = |what: &str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() != (r, c) {
                Err(Error::Dimension(format!(
                    "{what} must be {r}x{c}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )))
            } else if !m.iter().all(|v| v.is_finite()) {
                Err(Error::Dimension(format!("{what} has non-finite entries")))
            } else {
                Ok(())
            }
        };
        match &self.state_matrix {
            StateMatrix::Affine { a0, terms } => {
                dim_err("A0", a0, n, n)?;
                for (idx, m) in terms {
                    if *idx >= self.n_d() {
                        return Err(Error::Dimension(format!(
                            "A term index {idx} out of range for {} design variables",
                            self.n_d()
                        )));
                    }
                    dim_err("A term", m, n, n)?;
                }
            }
            StateMatrix::Custom { n_x, .. } => {
                if *n_x != n {
                    return Err(Error::Dimension(format!("custom A has {n_x} states, B has {n} rows")));
                }
            }
        }
        dim_err("B_w", &self.b_w, n, self.n_w())?;
        dim_err("C", &self.c, self.n_z(), n)?;
        dim_err("D", &self.d, self.n_z(), self.n_u())?;
        if self.d_upper.len() != self.n_d() {
            return Err(Error::Dimension("design bounds have different lengths".into()));
        }
        if self.d_lower.iter().zip(self.d_upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("design bounds must satisfy lower <= upper".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("Lipschitz constant must be finite and >= 0".into()));
        }
        if let Nonlinearity::ScaledSine { slot, arg_index, .. } = self.nonlinearity {
            if slot >= n || arg_index >= n {
                return Err(Error::Dimension("nonlinearity indices out of range".into()));
            }
        }
        Ok(())
    }

    fn check_design(&self, d: &DVector<f64>) -> Result<()> {
        if d.len() != self.n_d() {
            return Err(Error::Dimension(format!(
                "design vector has {} entries, plant expects {}",
                d.len(),
                self.n_d()
            )));
        }
        if !d.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("design vector"));
        }
        Ok(())
    }

    pub fn in_bounds(&self, d: &DVector<f64>) -> bool {
        d.iter()
            .zip(self.d_lower.iter().zip(self.d_upper.iter()))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Box projection onto `[d_lower, d_upper]`.
    pub fn project(&self, d: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            d.len(),
            d.iter()
                .zip(self.d_lower.iter().zip(self.d_upper.iter()))
                .map(|(v, (l, u))| v.clamp(*l, *u)),
        )
    }

    pub fn assemble_a(&self, d: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_design(d)?;
        if !self.in_bounds(d) {
            warn!("design vector {:?} lies outside the design bounds", d.as_slice());
        }
        Ok(match &self.state_matrix {
            StateMatrix::Affine { a0, terms } => {
                let mut a = a0.clone();
                for (idx, m) in terms {
                    a += m * d[*idx];
                }
                a
            }
            StateMatrix::Custom { map, .. } => map(d),
        })
    }

    /// `dA/dd_i` at `d`; exact for the affine model.
    pub fn da_dd(&self, i: usize, d: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_design(d)?;
        if i >= self.n_d() {
            return Err(Error::Dimension(format!("design index {i} out of range")));
        }
        let n = self.n_x();
        Ok(match &self.state_matrix {
            StateMatrix::Affine { terms, .. } => terms
                .iter()
                .filter(|(idx, _)| *idx == i)
                .fold(DMatrix::zeros(n, n), |acc, (_, m)| acc + m),
            StateMatrix::Custom { map, .. } => {
                let h = 1e-6 * (1.0 + d[i].abs());
                let mut up = d.clone();
                let mut down = d.clone();
                up[i] += h;
                down[i] -= h;
                (map(&up) - map(&down)) / (2.0 * h)
            }
        })
    }

    pub fn eval_phi(&self, x: &DVector<f64>) -> DVector<f64> {
        self.nonlinearity.eval(x)
    }

    /// `A(d) + B K`.
    pub fn closed_loop(&self, d: &DVector<f64>, k: &GainMatrix) -> Result<DMatrix<f64>> {
        if k.0.shape() != (self.n_u(), self.n_x()) {
            return Err(Error::Dimension(format!(
                "gain must be {}x{}, got {}x{}",
                self.n_u(),
                self.n_x(),
                k.0.nrows(),
                k.0.ncols()
            )));
        }
        Ok(self.assemble_a(d)? + &self.b * &k.0)
    }

    /// `C_z = C + D K`.
    pub fn output_map(&self, k: &GainMatrix) -> DMatrix<f64> {
        &self.c + &self.d * &k.0
    }

    /// `R = D^T D`.
    pub fn control_weight(&self) -> DMatrix<f64> {
        self.d.transpose() * &self.d
    }

    pub fn check_assumptions(&self, probe_count: usize, seed: u64) -> Result<ValidationReport> {
        assumptions::check(self, probe_count, seed)
    }

    /// Plant in the coordinates `x = T phi`.
    ///
    /// For a diagonal `T` acting on a catalog nonlinearity the new Lipschitz
    /// constant is exact; otherwise the product bound
    /// `||T^-1||_2 * alpha * ||T||_2` is used.
    pub fn transform(&self, tr: &Transform) -> Result<PlantFamily> {
        let n = self.n_x();
        if tr.dim() != n {
            return Err(Error::Dimension(format!("transform must be {n}x{n}")));
        }
        let (t, ti) = (&tr.t, &tr.t_inv);
        let sim = |m: &DMatrix<f64>| ti * m * t;

        let state_matrix = match &self.state_matrix {
            StateMatrix::Affine { a0, terms } => StateMatrix::Affine {
                a0: sim(a0),
                terms: terms.iter().map(|(i, m)| (*i, sim(m))).collect(),
            },
            StateMatrix::Custom { n_x, map } => {
                let (map, t, ti) = (map.clone(), t.clone(), ti.clone());
                StateMatrix::Custom {
                    n_x: *n_x,
                    map: Arc::new(move |d| &ti * map(d) * &t),
                }
            }
        };

        let (nonlinearity, alpha) = if tr.is_identity() {
            (self.nonlinearity.clone(), self.alpha)
        } else {
            match (&self.nonlinearity, tr.is_diagonal()) {
                (
                    Nonlinearity::ScaledSine {
                        slot,
                        arg_index,
                        gain,
                        arg_scale,
                    },
                    true,
                ) => {
                    let out_scale = ti[(*slot, *slot)];
                    let in_scale = t[(*arg_index, *arg_index)];
                    (
                        Nonlinearity::ScaledSine {
                            slot: *slot,
                            arg_index: *arg_index,
                            gain: gain * out_scale,
                            arg_scale: arg_scale * in_scale,
                        },
                        self.alpha * out_scale.abs() * in_scale.abs(),
                    )
                }
                (Nonlinearity::None, _) => (Nonlinearity::None, self.alpha * spectral_norm(ti) * spectral_norm(t)),
                (other, _) => {
                    let bound = self.alpha * spectral_norm(ti) * spectral_norm(t);
                    if self.alpha > 0.0 {
                        warn!(
                            "non-diagonal transform{}: using conservative Lipschitz bound {bound}",
                            if other.is_catalog() {
                                ""
                            } else {
                                " of a custom nonlinearity"
                            }
                        );
                    }
                    (
                        Nonlinearity::Transformed {
                            inner: Box::new(other.clone()),
                            transform: tr.clone(),
                        },
                        bound,
                    )
                }
            }
        };

        Ok(PlantFamily {
            state_matrix,
            b: ti * &self.b,
            b_w: ti * &self.b_w,
            c: &self.c * t,
            d: self.d.clone(),
            nonlinearity,
            alpha,
            d_lower: self.d_lower.clone(),
            d_upper: self.d_upper.clone(),
        })
    }
}

/// `max Re λ(M) < -margin`.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> Result<bool> {
    Ok(max_real_part(m)? < -margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manipulator;
    use nalgebra::{dmatrix, dvector};

    fn scalar_plant(terms: Vec<(usize, DMatrix<f64>)>) -> PlantFamily {
        PlantFamily {
            state_matrix: StateMatrix::Affine {
                a0: dmatrix![-1.0, 0.5; 0.0, -2.0],
                terms,
            },
            b: dmatrix![0.0; 1.0],
            b_w: dmatrix![1.0; 0.0],
            c: dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0],
            d: dmatrix![0.0; 0.0; 1.0],
            nonlinearity: Nonlinearity::None,
            alpha: 0.0,
            d_lower: dvector![-1.0, -1.0],
            d_upper: dvector![1.0, 1.0],
        }
    }

    #[test]
    fn manipulator_state_matrix_entry() {
        let p = manipulator::plant();
        let a = p.assemble_a(&dvector![0.0046]).unwrap();
        assert!((a[(1, 1)] + 0.0046 / 0.0037).abs() < 1e-12);
        let da = p.da_dd(0, &dvector![0.0046]).unwrap();
        assert!((da[(1, 1)] + 1.0 / 0.0037).abs() < 1e-9);
        assert_eq!(da.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn empty_terms_and_zero_design_give_a0() {
        let p = scalar_plant(vec![]);
        assert_eq!(
            p.assemble_a(&dvector![0.3, -0.2]).unwrap(),
            dmatrix![-1.0, 0.5; 0.0, -2.0]
        );
        assert_eq!(p.da_dd(1, &dvector![0.0, 0.0]).unwrap(), DMatrix::zeros(2, 2));
        let p = scalar_plant(vec![(0, DMatrix::identity(2, 2))]);
        assert_eq!(
            p.assemble_a(&dvector![0.0, 0.0]).unwrap(),
            dmatrix![-1.0, 0.5; 0.0, -2.0]
        );
    }

    #[test]
    fn shared_index_terms_add() {
        let p = scalar_plant(vec![
            (1, dmatrix![1.0, 0.0; 0.0, 0.0]),
            (1, dmatrix![0.0, 2.0; 0.0, 0.0]),
        ]);
        assert_eq!(p.da_dd(1, &dvector![0.0, 0.0]).unwrap(), dmatrix![1.0, 2.0; 0.0, 0.0]);
        assert!(p.da_dd(2, &dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn custom_state_matrix_uses_central_differences() {
        let mut p = scalar_plant(vec![]);
        p.state_matrix = StateMatrix::Custom {
            n_x: 2,
            map: Arc::new(|d| dmatrix![-1.0 - d[0] * d[0], d[1]; 0.0, -2.0]),
        };
        let da = p.da_dd(0, &dvector![0.5, 0.0]).unwrap();
        assert!((da[(0, 0)] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn phi_catalog() {
        let p = manipulator::plant();
        let mut x = DVector::zeros(4);
        assert_eq!(p.eval_phi(&x), DVector::zeros(4));
        x[2] = std::f64::consts::FRAC_PI_2;
        let v = p.eval_phi(&x);
        assert!((v[3] + 0.021 * 9.81 * 0.15 / 0.0093).abs() < 1e-12);
        assert!((v[3] + 3.3226).abs() < 1e-3);
        assert_eq!(Nonlinearity::None.eval(&x), DVector::zeros(4));
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = manipulator::plant();
        let q = p.transform(&Transform::identity(4)).unwrap();
        assert_eq!(q.alpha, p.alpha);
        assert_eq!(q.b, p.b);
        let d = dvector![0.01];
        assert_eq!(q.assemble_a(&d).unwrap(), p.assemble_a(&d).unwrap());
    }

    #[test]
    fn diagonal_transform_scales_lipschitz_constant() {
        let p = manipulator::plant();
        let q = p
            .transform(&Transform::diagonal(&[1.0, 1.0, 1.0, 10.0]).unwrap())
            .unwrap();
        assert!((q.alpha - p.alpha / 10.0).abs() < 1e-12);
        assert!((q.nonlinearity.catalog_lipschitz().unwrap() - q.alpha).abs() < 1e-12);
        // transformed Phi is T^-1 Phi(T phi)
        let phi = dvector![0.1, -0.2, 0.7, 0.05];
        let t = Transform::diagonal(&[1.0, 1.0, 1.0, 10.0]).unwrap();
        let direct = &t.t_inv * p.eval_phi(&(&t.t * &phi));
        assert!((q.eval_phi(&phi) - direct).norm() < 1e-15);
    }

    #[test]
    fn general_transform_wraps_nonlinearity() {
        let p = manipulator::plant();
        let t =
            Transform::new(dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0; 0.0, 0.5, 1.0, 0.0; 0.0, 0.0, 0.0, 2.0])
                .unwrap();
        let q = p.transform(&t).unwrap();
        assert!(matches!(q.nonlinearity, Nonlinearity::Transformed { .. }));
        assert!(q.alpha >= p.alpha / 2.0);
        let phi = dvector![0.3, 0.2, -0.1, 0.4];
        let direct = &t.t_inv * p.eval_phi(&(&t.t * &phi));
        assert!((q.eval_phi(&phi) - direct).norm() < 1e-15);
    }

    #[test]
    fn singular_transform_is_rejected() {
        assert_eq!(
            Transform::new(dmatrix![1.0, 2.0; 2.0, 4.0]),
            Err(Error::SingularTransform)
        );
    }

    #[test]
    fn hurwitz_checks() {
        assert!(is_hurwitz(&(-DMatrix::<f64>::identity(3, 3)), 0.0).unwrap());
        let a = manipulator::plant().assemble_a(&dvector![0.0046]).unwrap();
        assert!(!is_hurwitz(&a, 0.0).unwrap());
        assert!(!is_hurwitz(&(-DMatrix::<f64>::identity(2, 2)), 1.0).unwrap());
    }

    #[test]
    fn validation_catches_bad_dimensions() {
        let mut p = scalar_plant(vec![]);
        p.c = DMatrix::zeros(3, 3);
        assert!(matches!(p.validate(), Err(Error::Dimension(_))));
        let mut p = scalar_plant(vec![(5, DMatrix::zeros(2, 2))]);
        assert!(p.validate().is_err());
        p.state_matrix = StateMatrix::Affine {
            a0: DMatrix::zeros(2, 2),
            terms: vec![],
        };
        p.d_lower[0] = 2.0;
        assert!(p.validate().is_err());
    }
}

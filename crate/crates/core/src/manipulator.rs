//! Single-link flexible manipulator driven by a DC motor, with the motor's
//! viscous damping `b_m` as the design variable.
//!
//! States: motor angle, motor rate, link angle, link rate.

use nalgebra::{dmatrix, dvector, DMatrix};

use crate::codesign::{CoDesignConfig, DesignFunction};
use crate::matrix_equations::C64;
use crate::plant::{Nonlinearity, PlantFamily, StateMatrix, Transform};

/// Motor inertia.
pub const J_M: f64 = 0.0037;
/// Link inertia.
pub const J_L: f64 = 0.0093;
/// Link mass.
pub const MASS: f64 = 0.021;
/// Distance to the link's center of mass.
pub const LENGTH: f64 = 0.15;
/// Torsional stiffness.
pub const K_M: f64 = 0.18;
/// Amplifier gain.
pub const K_T: f64 = 0.08;
pub const GRAVITY: f64 = 9.81;

pub const DAMPING_LOWER: f64 = 0.002;
pub const DAMPING_UPPER: f64 = 0.1;
pub const INITIAL_DAMPING: f64 = 0.0046;

/// Closed-loop poles used for the linear part of the initial gain.
pub const POLE_TARGETS: [f64; 4] = [-9.0, -7.0, -6.0, -4.0];

/// `m g l / J_l`.
pub fn lipschitz_constant() -> f64 {
    MASS * GRAVITY * LENGTH / J_L
}

pub fn plant() -> PlantFamily {
    let a0 = dmatrix![
        0.0, 1.0, 0.0, 0.0;
        -K_M / J_M, 0.0, K_M / J_M, 0.0;
        0.0, 0.0, 0.0, 1.0;
        K_M / J_L, 0.0, -K_M / J_L, 0.0
    ];
    let mut damping = DMatrix::zeros(4, 4);
    damping[(1, 1)] = -1.0 / J_M;

    PlantFamily {
        state_matrix: StateMatrix::Affine {
            a0,
            terms: vec![(0, damping)],
        },
        b: dmatrix![0.0; K_T / J_M; 0.0; 0.0],
        b_w: dmatrix![0.0; 0.0; 1.0; 0.0],
        c: dmatrix![
            1.0, 0.0, 0.0, 0.0;
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 0.0
        ],
        d: dmatrix![0.0; 0.0; 0.0; 1.0],
        nonlinearity: Nonlinearity::scaled_sine(3, 2, -lipschitz_constant()),
        alpha: lipschitz_constant(),
        d_lower: dvector![DAMPING_LOWER],
        d_upper: dvector![DAMPING_UPPER],
    }
}

/// Coordinate change that scales the link rate by 10.
pub fn transform() -> Transform {
    Transform::diagonal(&[1.0, 1.0, 1.0, 10.0]).expect("nonsingular")
}

/// Settings of the reference run: `eta = eta_bar = 1e-4`, `mu = 0.01`,
/// `eps_g = 1e-3`, pure trace objective.
pub fn config() -> CoDesignConfig {
    CoDesignConfig {
        eta: 1e-4,
        eta_bar: 1e-4,
        mu: Some(0.01),
        beta_d: 0.0,
        beta_c: 1.0,
        design_fn: DesignFunction::Zero,
        eps_g: 1e-3,
        max_iters: 1000,
        transform: Some(transform()),
        pole_targets: POLE_TARGETS.iter().map(|p| C64::new(*p, 0.0)).collect(),
        initial_d: dvector![INITIAL_DAMPING],
        ..CoDesignConfig::default()
    }
}

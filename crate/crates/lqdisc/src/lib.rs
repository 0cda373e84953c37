//! Discretization of continuous-time linear-quadratic optimal control
//! problems with input time delays.
//!
//! The library models MIMO systems as grids of SISO channels with per-channel
//! input delays, builds their delay-free augmented discrete realizations, and
//! computes the discrete-equivalent cost matrices by three interchangeable
//! numerical methods (fixed-step Runge-Kutta, block matrix exponentials,
//! step-doubling). On top of that sit covariance propagation for stochastic
//! problems and a condensed-QP model predictive controller with a linear
//! Kalman filter for closed-loop simulation.
//!
//! All numerics are generic over the scalar type; the `*64` aliases at the
//! crate root fix `f64` for ordinary use.

pub mod delay;
mod error;
pub mod io;
pub mod lq;
pub mod mpc;
pub mod ode;
mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use delay::{
    augment_discrete, dense_reference_sim, selection_block, stack_mimo, AugmentedDiscreteSystem,
    DelayConstants, MimoDelaySystem, SisoDelayChannel, StackedCoefficients,
};
pub use lq::{
    affine_terms, discretize, propagate_covariance, stochastic_offset, ContinuousLqProblem,
    DiscreteLqProblem, DiscretizeOptions,
};
pub use solvers::{
    expm, solve, solve_fixed_step, solve_matrix_exp, solve_step_doubling, ButcherTableau,
    DiscretizationResult, Method,
};

/// Concrete `f64` aliases for the main library types.
pub type SisoDelayChannel64 = SisoDelayChannel<f64>;
pub type MimoDelaySystem64 = MimoDelaySystem<f64>;
pub type StackedCoefficients64 = StackedCoefficients<f64>;
pub type AugmentedDiscreteSystem64 = AugmentedDiscreteSystem<f64>;
pub type ButcherTableau64 = ButcherTableau<f64>;
pub type DiscretizationResult64 = DiscretizationResult<f64>;
pub type ContinuousLqProblem64 = ContinuousLqProblem<f64>;
pub type DiscreteLqProblem64 = DiscreteLqProblem<f64>;

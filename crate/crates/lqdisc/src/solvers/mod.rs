//! Three interchangeable discretization methods producing identical outputs:
//! fixed-step Runge-Kutta, block matrix exponentials, and step-doubling.

use std::time::Duration;

use nalgebra::DMatrix;

use crate::delay::StackedCoefficients;
use crate::error::Result;
use crate::scalar::Scalar;

mod expm;
mod fixed_step;
mod matrix_exp;
mod stage;
mod step_doubling;
pub mod tableau;

pub use expm::{expm, one_norm};
pub use fixed_step::solve_fixed_step;
pub use matrix_exp::solve_matrix_exp;
pub use stage::{stage_coefficients, stage_matrices, StageCoefficients};
pub use step_doubling::solve_step_doubling;
pub use tableau::ButcherTableau;

/// Which numerical method produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedStep { steps: usize },
    MatrixExponential,
    StepDoubling { doublings: u32 },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::FixedStep { .. } => "ode",
            Method::MatrixExponential => "expm",
            Method::StepDoubling { .. } => "doubling",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::FixedStep { steps } => write!(f, "ode(n={steps})"),
            Method::MatrixExponential => write!(f, "expm"),
            Method::StepDoubling { doublings } => write!(f, "doubling(j={doublings})"),
        }
    }
}

/// Discretized system and cost matrices at one sampling period.
#[derive(Debug, Clone)]
pub struct DiscretizationResult<T> {
    /// State transition over one period.
    pub a: DMatrix<T>,
    /// Input map over the stacked `(m_bar + 1) n_u` input coordinate.
    pub b_o: DMatrix<T>,
    /// Quadratic cost weight over `[x; u_o; u]`.
    pub q: DMatrix<T>,
    /// Affine cost coefficient map, `q_k = m * z_ref`.
    pub m: DMatrix<T>,
    /// Process noise covariance over the continuous state block.
    pub r_ww: DMatrix<T>,
    /// Output map `[C D_o] [A B_o; 0 I]` at the sampling instant.
    pub gamma: DMatrix<T>,
    /// Integral of `tr(C'Q_c C R_ww(s))` over one period.
    pub rho_w: T,
    pub method: Method,
    pub n_steps: usize,
    pub wall_time: Duration,
}

/// Dispatch on the method tag.
pub fn solve<T: Scalar>(
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
    ts: T,
    method: Method,
    tab: &ButcherTableau<T>,
) -> Result<DiscretizationResult<T>> {
    match method {
        Method::FixedStep { steps } => solve_fixed_step(coeffs, q_c, g_c, ts, steps, tab),
        Method::MatrixExponential => solve_matrix_exp(coeffs, q_c, g_c, ts),
        Method::StepDoubling { doublings } => {
            solve_step_doubling(coeffs, q_c, g_c, ts, doublings, tab)
        }
    }
}

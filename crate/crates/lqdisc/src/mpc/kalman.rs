//! Linear Kalman filter on the augmented discrete model, with zero
//! process/measurement cross-covariance.

use nalgebra::{DMatrix, DVector};

use crate::delay::AugmentedDiscreteSystem;
use crate::error::{Error, Result};
use crate::ode::symmetrize;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct KalmanState<T> {
    pub x: DVector<T>,
    pub p: DMatrix<T>,
}

impl<T: Scalar> KalmanState<T> {
    pub fn new(x: DVector<T>, p: DMatrix<T>) -> Self {
        KalmanState { x, p }
    }
}

/// Measurement update with innovation covariance `C P C' + R_vv`. The input
/// feeds the feedthrough term of the predicted output.
pub fn measurement_update<T: Scalar>(
    state: &KalmanState<T>,
    u: &DVector<T>,
    y: &DVector<T>,
    sys: &AugmentedDiscreteSystem<T>,
    r_vv: &DMatrix<T>,
) -> Result<KalmanState<T>> {
    let c = &sys.c;
    let innovation_cov = c * &state.p * c.transpose() + r_vv;
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or(Error::SingularInnovation)?;
    // K = P C' S^-1 via S K' = C P'.
    let gain = chol.solve(&(c * state.p.transpose())).transpose();
    let innovation = y - (c * &state.x + &sys.d * u);
    let x = &state.x + &gain * innovation;
    // Joseph form keeps the covariance symmetric positive semidefinite.
    let ikc = DMatrix::identity(state.p.nrows(), state.p.nrows()) - &gain * c;
    let p = &ikc * &state.p * ikc.transpose() + &gain * r_vv * gain.transpose();
    Ok(KalmanState {
        x,
        p: symmetrize(&p),
    })
}

/// Time update `x <- A x + B u`, `P <- A P A' + R_ww`.
pub fn time_update<T: Scalar>(
    state: &KalmanState<T>,
    u: &DVector<T>,
    sys: &AugmentedDiscreteSystem<T>,
    r_ww: &DMatrix<T>,
) -> KalmanState<T> {
    KalmanState {
        x: &sys.a * &state.x + &sys.b * u,
        p: symmetrize(&(&sys.a * &state.p * sys.a.transpose() + r_ww)),
    }
}

/// One full filter step: measurement update with `y`, then time update.
pub fn kalman_step<T: Scalar>(
    state: &KalmanState<T>,
    u: &DVector<T>,
    y: &DVector<T>,
    sys: &AugmentedDiscreteSystem<T>,
    r_ww: &DMatrix<T>,
    r_vv: &DMatrix<T>,
) -> Result<KalmanState<T>> {
    let posterior = measurement_update(state, u, y, sys, r_vv)?;
    Ok(time_update(&posterior, u, sys, r_ww))
}

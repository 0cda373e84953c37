//! Precomputed per-stage coefficient matrices of the Runge-Kutta recursions.
//!
//! For a coefficient matrix `M` the stage relations are
//! `X_i = I + h sum_j a_ij M X_j`; explicit tableaus are solved by forward
//! substitution, implicit ones through one linear solve on the stacked system.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solvers::tableau::ButcherTableau;

/// Stage coefficients for the three transition families and their input maps.
#[derive(Debug, Clone)]
pub struct StageCoefficients<T> {
    /// `Lambda_i`, stage coefficients of the state transition.
    pub lambda_stages: Vec<DMatrix<T>>,
    /// `Lambda_v_i`, stage coefficients of the fractional-delay transition.
    pub lambda_v_stages: Vec<DMatrix<T>>,
    /// `Omega_i`, stage coefficients of the combined block transition.
    pub omega_stages: Vec<DMatrix<T>>,
    /// `Theta_1_i = sum_j a_ij Lambda_j`.
    pub theta1_stages: Vec<DMatrix<T>>,
    /// `Theta_2_i = sum_j a_ij Lambda_v_j`.
    pub theta2_stages: Vec<DMatrix<T>>,
    /// One-step state transition `Lambda = I + h sum_i b_i A_c Lambda_i`.
    pub lambda: DMatrix<T>,
    pub lambda_v: DMatrix<T>,
    /// One-step combined block transition.
    pub omega: DMatrix<T>,
    /// Input quadrature weight `Theta_1 = sum_i b_i Lambda_i`.
    pub theta1: DMatrix<T>,
    pub theta2: DMatrix<T>,
}

/// Solve the stage relations for one coefficient matrix.
pub fn stage_matrices<T: Scalar>(
    tab: &ButcherTableau<T>,
    h: T,
    m: &DMatrix<T>,
) -> Result<Vec<DMatrix<T>>> {
    let s = tab.stages();
    let n = m.nrows();
    let id = DMatrix::<T>::identity(n, n);
    if tab.is_explicit() {
        let mut stages: Vec<DMatrix<T>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut x = id.clone();
            for (j, stage) in stages.iter().enumerate() {
                let w = tab.a[(i, j)];
                if w != T::zero() {
                    x += (m * stage).scale(h * w);
                }
            }
            stages.push(x);
        }
        Ok(stages)
    } else {
        // (I - h a (x) M) [X_1; ...; X_s] = [I; ...; I]
        let system = DMatrix::<T>::identity(s * n, s * n) - tab.a.kronecker(m).scale(h);
        let mut rhs = DMatrix::<T>::zeros(s * n, n);
        for i in 0..s {
            rhs.view_mut((i * n, 0), (n, n)).copy_from(&id);
        }
        let sol = system
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularStageSystem)?;
        Ok((0..s)
            .map(|i| sol.view((i * n, 0), (n, n)).into_owned())
            .collect())
    }
}

/// Stage coefficients for all three coefficient matrices at step size `h`.
pub fn stage_coefficients<T: Scalar>(
    tab: &ButcherTableau<T>,
    h: T,
    a_c: &DMatrix<T>,
    v_a_c: &DMatrix<T>,
    h_c: &DMatrix<T>,
) -> Result<StageCoefficients<T>> {
    if !h.is_finite() || h <= T::zero() {
        return Err(Error::ZeroSteps);
    }
    let s = tab.stages();
    let lambda_stages = stage_matrices(tab, h, a_c)?;
    let lambda_v_stages = stage_matrices(tab, h, v_a_c)?;
    let omega_stages = stage_matrices(tab, h, h_c)?;

    let weighted_sum = |stages: &[DMatrix<T>], w: &dyn Fn(usize) -> T| {
        let mut acc = DMatrix::<T>::zeros(stages[0].nrows(), stages[0].ncols());
        for (i, stage) in stages.iter().enumerate() {
            let wi = w(i);
            if wi != T::zero() {
                acc += stage.scale(wi);
            }
        }
        acc
    };

    let theta1_stages: Vec<_> = (0..s)
        .map(|i| weighted_sum(&lambda_stages, &|j| tab.a[(i, j)]))
        .collect();
    let theta2_stages: Vec<_> = (0..s)
        .map(|i| weighted_sum(&lambda_v_stages, &|j| tab.a[(i, j)]))
        .collect();

    let theta1 = weighted_sum(&lambda_stages, &|i| tab.b[i]);
    let theta2 = weighted_sum(&lambda_v_stages, &|i| tab.b[i]);
    let omega_weighted = weighted_sum(&omega_stages, &|i| tab.b[i]);

    let n = a_c.nrows();
    let hn = h_c.nrows();
    let lambda = DMatrix::identity(n, n) + (a_c * &theta1).scale(h);
    let lambda_v = DMatrix::identity(n, n) + (v_a_c * &theta2).scale(h);
    let omega = DMatrix::identity(hn, hn) + (h_c * omega_weighted).scale(h);

    Ok(StageCoefficients {
        lambda_stages,
        lambda_v_stages,
        omega_stages,
        theta1_stages,
        theta2_stages,
        lambda,
        lambda_v,
        omega,
        theta1,
        theta2,
    })
}

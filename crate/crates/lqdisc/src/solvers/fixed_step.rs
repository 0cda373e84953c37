//! Fixed-step Runge-Kutta discretization: iterate the precomputed-coefficient
//! recursions N times with stage-value quadrature for the cost integrals.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::delay::StackedCoefficients;
use crate::error::{Error, Result};
use crate::ode::{build_blocks, gamma_eval, symmetrize};
use crate::scalar::Scalar;
use crate::solvers::stage::stage_coefficients;
use crate::solvers::tableau::ButcherTableau;
use crate::solvers::{DiscretizationResult, Method};

pub fn solve_fixed_step<T: Scalar>(
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
    ts: T,
    n: usize,
    tab: &ButcherTableau<T>,
) -> Result<DiscretizationResult<T>> {
    if n == 0 {
        return Err(Error::ZeroSteps);
    }
    let start = Instant::now();

    let blocks = build_blocks(coeffs, q_c, g_c)?;
    let h = ts / T::from_usize(n).unwrap();
    let v_a = &coeffs.v * &coeffs.a;
    let sc = stage_coefficients(tab, h, &coeffs.a, &v_a, &blocks.h_c)?;
    let s = tab.stages();

    let n_x = coeffs.n_x;
    let n_z = coeffs.n_z;
    let cols = coeffs.input_cols();
    let dim = coeffs.gamma_dim();

    let b1_bar = coeffs.b1.scale(h);
    let b2_bar = coeffs.b2_bar.scale(h);
    let r_bar = &blocks.r_ww_bar;
    let q_cww = &blocks.q_cww;
    // Quadrature weight of each stage derivative inside the rho integral.
    let cbar: Vec<T> = (0..s)
        .map(|j| (0..s).fold(T::zero(), |acc, i| acc + tab.b[i] * tab.a[(i, j)]))
        .collect();

    let mut a_k = DMatrix::<T>::identity(n_x, n_x);
    let mut a_v_k = DMatrix::<T>::identity(n_x, n_x);
    let mut b1_k = DMatrix::<T>::zeros(n_x, cols);
    let mut b2_k = DMatrix::<T>::zeros(n_x, cols);
    let mut q_k = DMatrix::<T>::zeros(dim, dim);
    let mut m_k = DMatrix::<T>::zeros(dim, n_z);
    let mut r_k = DMatrix::<T>::zeros(n_x, n_x);
    let mut rho_k = T::zero();

    for _ in 0..n {
        let mut q_inc = DMatrix::<T>::zeros(dim, dim);
        let mut m_inc = DMatrix::<T>::zeros(dim, n_z);
        let mut r_inc = DMatrix::<T>::zeros(n_x, n_x);
        let mut rho_stage = T::zero();

        for i in 0..s {
            let a_ki = &sc.lambda_stages[i] * &a_k;
            let b1_ki = &b1_k + &sc.theta1_stages[i] * &a_k * &b1_bar;
            let b2_ki = &b2_k + &sc.theta2_stages[i] * &a_v_k * &b2_bar;
            let b_o_ki = b1_ki + b2_ki;

            // Output map of the stage value, [C A_ki, C B_o_ki + D_o].
            let g_i = gamma_eval(&a_ki, &b_o_ki, &coeffs.c, &coeffs.d_o)?;
            let qc_g = q_c * &g_i;
            q_inc += (g_i.transpose() * &qc_g).scale(tab.b[i]);
            m_inc += (g_i.transpose() * q_c).scale(tab.b[i]);

            let r_dot = &a_ki * r_bar * a_ki.transpose();
            rho_stage += cbar[i] * (q_cww * &r_dot).trace();
            r_inc += r_dot.scale(tab.b[i]);
        }

        rho_k += h * (q_cww * &r_k).trace() + h * h * rho_stage;
        q_k = symmetrize(&(q_k + q_inc.scale(h)));
        m_k -= m_inc.scale(h);
        r_k = symmetrize(&(r_k + r_inc.scale(h)));

        b1_k += &sc.theta1 * &a_k * &b1_bar;
        b2_k += &sc.theta2 * &a_v_k * &b2_bar;
        a_k = &sc.lambda * a_k;
        a_v_k = &sc.lambda_v * a_v_k;
    }

    if a_k.iter().any(|x| !x.is_finite()) || !rho_k.is_finite() {
        return Err(Error::Nonfinite("fixed-step solver state"));
    }

    let b_o = &b1_k + &b2_k;
    let gamma = gamma_eval(&a_k, &b_o, &coeffs.c, &coeffs.d_o)?;

    Ok(DiscretizationResult {
        a: a_k,
        b_o,
        q: q_k,
        m: m_k,
        r_ww: r_k,
        gamma,
        rho_w: rho_k,
        method: Method::FixedStep { steps: n },
        n_steps: n,
        wall_time: start.elapsed(),
    })
}

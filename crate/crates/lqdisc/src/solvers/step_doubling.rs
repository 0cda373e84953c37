//! Step-doubling discretization: the N = 2^j fixed-step recursions collapse
//! into j repeated-squaring passes over geometric-series accumulators,
//! reproducing the fixed-step result up to floating-point reassociation.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::delay::StackedCoefficients;
use crate::error::{Error, Result};
use crate::ode::{build_blocks, gamma_eval, symmetrize};
use crate::scalar::Scalar;
use crate::solvers::stage::stage_coefficients;
use crate::solvers::tableau::ButcherTableau;
use crate::solvers::{DiscretizationResult, Method};

pub fn solve_step_doubling<T: Scalar>(
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
    ts: T,
    doublings: u32,
    tab: &ButcherTableau<T>,
) -> Result<DiscretizationResult<T>> {
    if doublings > 46 {
        return Err(Error::dim("doubling count", "<= 46", doublings));
    }
    let start = Instant::now();

    let blocks = build_blocks(coeffs, q_c, g_c)?;
    let n = 1usize << doublings;
    let h = ts / T::from_usize(n).unwrap();
    let v_a = &coeffs.v * &coeffs.a;
    let sc = stage_coefficients(tab, h, &coeffs.a, &v_a, &blocks.h_c)?;
    let s = tab.stages();

    let n_x = coeffs.n_x;
    let dim = blocks.block_dim;
    let b1_bar = coeffs.b1.scale(h);
    let b2_bar = coeffs.b2_bar.scale(h);

    // Step-invariant cost kernels over the combined block coordinate.
    let e1_q_e1 = blocks.e1.transpose() * &blocks.q_bar * &blocks.e1;
    let e1_m = blocks.e1.transpose() * &blocks.m_bar;
    let mut q_kernel = DMatrix::<T>::zeros(3 * dim, 3 * dim);
    let mut m_kernel = DMatrix::<T>::zeros(3 * dim, blocks.m_bar.ncols());
    for i in 0..s {
        let w = tab.b[i] * h;
        q_kernel += (sc.omega_stages[i].transpose() * &e1_q_e1 * &sc.omega_stages[i]).scale(w);
        m_kernel += (sc.omega_stages[i].transpose() * &e1_m).scale(w);
    }

    let cbar: Vec<T> = (0..s)
        .map(|j| (0..s).fold(T::zero(), |acc, i| acc + tab.b[i] * tab.a[(i, j)]))
        .collect();

    // Accumulators at step count 1.
    let mut a_pow = sc.lambda.clone();
    let mut a_v_pow = sc.lambda_v.clone();
    let mut trans_sum = DMatrix::<T>::identity(n_x, n_x); // sum of Lambda powers
    let mut trans_v_sum = DMatrix::<T>::identity(n_x, n_x);
    let mut h_pow = sc.omega.clone();
    let mut h_sum = DMatrix::<T>::identity(3 * dim, 3 * dim); // sum of Omega powers
    let mut q_sum = q_kernel.clone();
    let mut r_sum = blocks.r_ww_bar.clone();
    // Double sum over strictly earlier steps, feeding the rho integral.
    let mut r_prefix = DMatrix::<T>::zeros(n_x, n_x);
    let mut count = T::one();

    for _ in 0..doublings {
        let r_prefix_new =
            &r_prefix + r_sum.scale(count) + &a_pow * &r_prefix * a_pow.transpose();
        let q_new = &q_sum + h_pow.transpose() * &q_sum * &h_pow;
        let h_sum_new = &h_sum + &h_sum * &h_pow;
        let r_new = &r_sum + &a_pow * &r_sum * a_pow.transpose();
        let trans_new = &trans_sum + &trans_sum * &a_pow;
        let trans_v_new = &trans_v_sum + &trans_v_sum * &a_v_pow;

        r_prefix = symmetrize(&r_prefix_new);
        q_sum = symmetrize(&q_new);
        h_sum = h_sum_new;
        r_sum = symmetrize(&r_new);
        trans_sum = trans_new;
        trans_v_sum = trans_v_new;
        h_pow = &h_pow * &h_pow;
        a_pow = &a_pow * &a_pow;
        a_v_pow = &a_v_pow * &a_v_pow;
        count += count;
    }

    let a = a_pow;
    let b_o = &sc.theta1 * &trans_sum * &b1_bar + &sc.theta2 * &trans_v_sum * &b2_bar;
    let q = symmetrize(&(blocks.e2.transpose() * &q_sum * &blocks.e2));
    let m = blocks.e2.transpose() * h_sum.transpose() * &m_kernel;
    let mut r_ww = DMatrix::<T>::zeros(n_x, n_x);
    let mut rho_w = T::zero();
    for i in 0..s {
        let li = &sc.lambda_stages[i];
        let sandwich = li * &r_sum * li.transpose();
        r_ww += sandwich.scale(tab.b[i] * h);
        rho_w += cbar[i] * (&blocks.q_cww * &sandwich).trace();
        let prefix = li * &r_prefix * li.transpose();
        rho_w += tab.b[i] * (&blocks.q_cww * prefix).trace();
    }
    rho_w *= h * h;
    let r_ww = symmetrize(&r_ww);

    if a.iter().any(|x| !x.is_finite()) || !rho_w.is_finite() {
        return Err(Error::Nonfinite("step-doubling solver state"));
    }

    let gamma_block = &blocks.e1 * &h_pow * &blocks.e2;
    let a_blk = gamma_block.view((0, 0), (n_x, n_x)).into_owned();
    let b_blk = gamma_block
        .view((0, n_x), (n_x, coeffs.input_cols()))
        .into_owned();
    let gamma = gamma_eval(&a_blk, &b_blk, &coeffs.c, &coeffs.d_o)?;

    Ok(DiscretizationResult {
        a,
        b_o,
        q,
        m,
        r_ww,
        gamma,
        rho_w,
        method: Method::StepDoubling { doublings },
        n_steps: n,
        wall_time: start.elapsed(),
    })
}

//! Matrix-exponential discretization: the transition, cost and covariance
//! integrals are read off block exponentials of three structured matrices.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::delay::StackedCoefficients;
use crate::error::Result;
use crate::ode::{build_blocks, gamma_eval, symmetrize, BlockDecomposition};
use crate::scalar::{lit, Scalar};
use crate::solvers::expm::expm;
use crate::solvers::{DiscretizationResult, Method};

/// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 10] = [
    -0.973_906_528_517_171_7,
    -0.865_063_366_688_984_5,
    -0.679_409_568_299_024_4,
    -0.433_395_394_129_247_2,
    -0.148_874_338_981_631_2,
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 10] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_4,
    0.295_524_224_714_752_87,
    0.295_524_224_714_752_87,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

pub fn solve_matrix_exp<T: Scalar>(
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
    ts: T,
) -> Result<DiscretizationResult<T>> {
    let start = Instant::now();
    let blocks = build_blocks(coeffs, q_c, g_c)?;
    let n_x = coeffs.n_x;
    let dim = blocks.block_dim;
    let big = 3 * dim;

    // exp([-H_c', E_1' Q_bar E_1; 0, H_c] t) yields the transition blocks and
    // the cost integral in its upper-right quadrant.
    let e1_q_e1 = blocks.e1.transpose() * &blocks.q_bar * &blocks.e1;
    let mut exponent = DMatrix::<T>::zeros(2 * big, 2 * big);
    exponent
        .view_mut((0, 0), (big, big))
        .copy_from(&(-blocks.h_c.transpose()));
    exponent.view_mut((0, big), (big, big)).copy_from(&e1_q_e1);
    exponent
        .view_mut((big, big), (big, big))
        .copy_from(&blocks.h_c);
    let phi1 = expm(&exponent.scale(ts))?;
    let phi1_12 = phi1.view((0, big), (big, big)).into_owned();
    let phi1_22 = phi1.view((big, big), (big, big)).into_owned();

    // exp([0, I; 0, H_c'] t) integrates the transition for the affine term.
    let mut exponent = DMatrix::<T>::zeros(2 * big, 2 * big);
    exponent
        .view_mut((0, big), (big, big))
        .copy_from(&DMatrix::identity(big, big));
    exponent
        .view_mut((big, big), (big, big))
        .copy_from(&blocks.h_c.transpose());
    let phi2 = expm(&exponent.scale(ts))?;
    let phi2_12 = phi2.view((0, big), (big, big)).into_owned();

    // Transition and input blocks sit in the first two diagonal blocks of
    // H(T_s) = Phi1_22 = diag(H_1, H_2, H_3).
    let a = phi1_22.view((0, 0), (n_x, n_x)).into_owned();
    let in_cols = coeffs.input_cols();
    let b1 = phi1_22.view((0, n_x), (n_x, in_cols)).into_owned();
    let b2 = phi1_22
        .view((dim, dim + n_x), (n_x, in_cols))
        .into_owned();
    let b_o = b1 + b2;

    let q = symmetrize(&(blocks.e2.transpose() * phi1_22.transpose() * &phi1_12 * &blocks.e2));
    let m = blocks.e2.transpose() * phi2_12 * blocks.e1.transpose() * &blocks.m_bar;
    let gamma = gamma_eval(&a, &b_o, &coeffs.c, &coeffs.d_o)?;

    let (r_ww, rho_w) = if g_c.ncols() == 0 {
        (DMatrix::zeros(n_x, n_x), T::zero())
    } else {
        let r_ww = symmetrize(&noise_covariance(&blocks, coeffs, ts)?);
        // Quadrature of tr(C'Q_c C R(t)) over the sampling interval.
        let half = lit::<T>(0.5) * ts;
        let mut rho = T::zero();
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let t = half * (T::one() + lit::<T>(*node));
            let r_t = noise_covariance(&blocks, coeffs, t)?;
            rho += lit::<T>(*weight) * (&blocks.q_cww * r_t).trace();
        }
        (r_ww, rho * half)
    };

    Ok(DiscretizationResult {
        a,
        b_o,
        q,
        m,
        r_ww,
        gamma,
        rho_w,
        method: Method::MatrixExponential,
        n_steps: 1,
        wall_time: start.elapsed(),
    })
}

/// `R_ww(t)` from `exp([-A_c, G_c G_c'; 0, A_c'] t)`: the product of the
/// lower-right block transposed with the upper-right block.
fn noise_covariance<T: Scalar>(
    blocks: &BlockDecomposition<T>,
    coeffs: &StackedCoefficients<T>,
    t: T,
) -> Result<DMatrix<T>> {
    let n_x = coeffs.n_x;
    let mut exponent = DMatrix::<T>::zeros(2 * n_x, 2 * n_x);
    exponent
        .view_mut((0, 0), (n_x, n_x))
        .copy_from(&(-&coeffs.a));
    exponent
        .view_mut((0, n_x), (n_x, n_x))
        .copy_from(&blocks.r_ww_bar);
    exponent
        .view_mut((n_x, n_x), (n_x, n_x))
        .copy_from(&coeffs.a.transpose());
    let phi3 = expm(&exponent.scale(t))?;
    let phi3_12 = phi3.view((0, n_x), (n_x, n_x));
    let phi3_22 = phi3.view((n_x, n_x), (n_x, n_x));
    Ok(phi3_22.transpose() * phi3_12)
}

//! Matrix differential equations whose terminal values are the discrete
//! system and cost matrices, plus the block decomposition of the combined
//! transition map used by the exponential and step-doubling solvers.
//!
//! The full state evolves as
//!
//! ```text
//!   dA   = A_c A            A(0)    = I
//!   dA_v = V A_c A_v        A_v(0)  = I
//!   dB_1 = A B_1c           B_1(0)  = 0
//!   dB_2 = A_v B2_bar       B_2(0)  = 0
//!   dQ   = G' Q_c G         Q(0)    = 0     G = [C D_o] [A B_o; 0 I]
//!   dM   = -G' Q_c          M(0)    = 0
//!   dR   = (A G_c)(A G_c)'  R(0)    = 0
//!   drho = tr(C'Q_c C R)    rho(0)  = 0
//! ```
//!
//! and subsets of the state give the plain system discretization, the
//! deterministic cost matrices, or the noise covariance alone.

use nalgebra::DMatrix;

use crate::delay::StackedCoefficients;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// State of the coupled matrix ODE system.
#[derive(Debug, Clone)]
pub struct LqOdeState<T> {
    pub a: DMatrix<T>,
    pub a_v: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub q: DMatrix<T>,
    pub m: DMatrix<T>,
    pub r_ww: DMatrix<T>,
    /// Running integral of `tr(C'Q_c C R_ww(s))`.
    pub rho_w: T,
}

impl<T: Scalar> LqOdeState<T> {
    /// Initial condition: identity transitions, zero integrals.
    pub fn initial(coeffs: &StackedCoefficients<T>, q_c: &DMatrix<T>) -> Self {
        let n_x = coeffs.n_x;
        let dim = coeffs.gamma_dim();
        let n_z = q_c.nrows();
        let _ = n_z;
        LqOdeState {
            a: DMatrix::identity(n_x, n_x),
            a_v: DMatrix::identity(n_x, n_x),
            b1: DMatrix::zeros(n_x, coeffs.input_cols()),
            b2: DMatrix::zeros(n_x, coeffs.input_cols()),
            q: DMatrix::zeros(dim, dim),
            m: DMatrix::zeros(dim, q_c.nrows()),
            r_ww: DMatrix::zeros(n_x, n_x),
            rho_w: T::zero(),
        }
    }

    pub fn b_o(&self) -> DMatrix<T> {
        &self.b1 + &self.b2
    }
}

/// Combined output map `[C D_o] [A B_o; 0 I]` at one time instant.
pub fn gamma_eval<T: Scalar>(
    a_t: &DMatrix<T>,
    b_o_t: &DMatrix<T>,
    c: &DMatrix<T>,
    d_o: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n_x = a_t.nrows();
    if c.ncols() != n_x {
        return Err(Error::dim("gamma c columns", n_x, c.ncols()));
    }
    if b_o_t.nrows() != n_x {
        return Err(Error::dim("gamma b_o rows", n_x, b_o_t.nrows()));
    }
    if d_o.ncols() != b_o_t.ncols() {
        return Err(Error::dim("gamma d_o columns", b_o_t.ncols(), d_o.ncols()));
    }
    if d_o.nrows() != c.nrows() {
        return Err(Error::dim("gamma d_o rows", c.nrows(), d_o.nrows()));
    }
    let mut g = DMatrix::zeros(c.nrows(), n_x + b_o_t.ncols());
    g.view_mut((0, 0), (c.nrows(), n_x)).copy_from(&(c * a_t));
    g.view_mut((0, n_x), (c.nrows(), b_o_t.ncols()))
        .copy_from(&(c * b_o_t + d_o));
    Ok(g)
}

/// Time derivative of the full ODE state. The system is autonomous; the time
/// argument of the underlying equations is carried implicitly by the state.
pub fn rhs_full<T: Scalar>(
    state: &LqOdeState<T>,
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
) -> Result<LqOdeState<T>> {
    if state.a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Nonfinite("ode state"));
    }
    let va = &coeffs.v * &coeffs.a;
    let gamma = gamma_eval(&state.a, &state.b_o(), &coeffs.c, &coeffs.d_o)?;
    let phi = &state.a * g_c;
    let q_cww = coeffs.c.transpose() * q_c * &coeffs.c;
    Ok(LqOdeState {
        a: &coeffs.a * &state.a,
        a_v: &va * &state.a_v,
        b1: &state.a * &coeffs.b1,
        b2: &state.a_v * &coeffs.b2_bar,
        q: gamma.transpose() * q_c * &gamma,
        m: -(gamma.transpose() * q_c),
        r_ww: &phi * phi.transpose(),
        rho_w: (q_cww * &state.r_ww).trace(),
    })
}

/// Constant block matrices for the exponential and step-doubling solvers.
#[derive(Debug, Clone)]
pub struct BlockDecomposition<T> {
    /// `diag(H_1c, H_2c, H_3c)` with `H_1c = [A_c B_1c; 0 0]`,
    /// `H_2c = [V A_c B2_bar; 0 0]`, `H_3c = [V A_c 0; 0 0]`.
    pub h_c: DMatrix<T>,
    /// `[I I -I]`, combining the three exponential blocks.
    pub e1: DMatrix<T>,
    /// `[I; I; I]`.
    pub e2: DMatrix<T>,
    /// `[C D_o]' Q_c [C D_o]`.
    pub q_bar: DMatrix<T>,
    /// `-[C D_o]' Q_c`.
    pub m_bar: DMatrix<T>,
    /// `G_c G_c'`.
    pub r_ww_bar: DMatrix<T>,
    /// `C' Q_c C`, the weight seen by the noise covariance integral.
    pub q_cww: DMatrix<T>,
    /// Dimension of one diagonal block of `h_c`.
    pub block_dim: usize,
}

/// Assemble the constant blocks from the stacked coefficients and weights.
pub fn build_blocks<T: Scalar>(
    coeffs: &StackedCoefficients<T>,
    q_c: &DMatrix<T>,
    g_c: &DMatrix<T>,
) -> Result<BlockDecomposition<T>> {
    let n_x = coeffs.n_x;
    let cols = coeffs.input_cols();
    let dim = coeffs.gamma_dim();
    if q_c.nrows() != coeffs.n_z || q_c.ncols() != coeffs.n_z {
        return Err(Error::dim(
            "weight matrix",
            format!("{}x{}", coeffs.n_z, coeffs.n_z),
            format!("{}x{}", q_c.nrows(), q_c.ncols()),
        ));
    }
    if g_c.nrows() != n_x {
        return Err(Error::dim("noise gain rows", n_x, g_c.nrows()));
    }

    let va = &coeffs.v * &coeffs.a;
    let mut h_c = DMatrix::zeros(3 * dim, 3 * dim);
    let mut put = |slot: usize, top_left: &DMatrix<T>, top_right: &DMatrix<T>| {
        let o = slot * dim;
        h_c.view_mut((o, o), (n_x, n_x)).copy_from(top_left);
        h_c.view_mut((o, o + n_x), (n_x, cols)).copy_from(top_right);
    };
    put(0, &coeffs.a, &coeffs.b1);
    put(1, &va, &coeffs.b2_bar);
    put(2, &va, &DMatrix::zeros(n_x, cols));

    let mut e1 = DMatrix::zeros(dim, 3 * dim);
    let mut e2 = DMatrix::zeros(3 * dim, dim);
    for k in 0..dim {
        e1[(k, k)] = T::one();
        e1[(k, dim + k)] = T::one();
        e1[(k, 2 * dim + k)] = -T::one();
        e2[(k, k)] = T::one();
        e2[(dim + k, k)] = T::one();
        e2[(2 * dim + k, k)] = T::one();
    }

    let mut cd = DMatrix::zeros(coeffs.n_z, dim);
    cd.view_mut((0, 0), (coeffs.n_z, n_x)).copy_from(&coeffs.c);
    cd.view_mut((0, n_x), (coeffs.n_z, cols))
        .copy_from(&coeffs.d_o);

    let q_bar = cd.transpose() * q_c * &cd;
    let m_bar = -(cd.transpose() * q_c);
    let r_ww_bar = g_c * g_c.transpose();
    let q_cww = coeffs.c.transpose() * q_c * &coeffs.c;

    Ok(BlockDecomposition {
        h_c,
        e1,
        e2,
        q_bar,
        m_bar,
        r_ww_bar,
        q_cww,
        block_dim: dim,
    })
}

/// Symmetric part `(x + x') / 2`, used to suppress roundoff drift.
pub(crate) fn symmetrize<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let half = lit::<T>(0.5);
    (x + x.transpose()).scale(half)
}

//! Facade assembling a full discrete LQ optimal control problem from its
//! continuous description: weights, affine terms, covariance propagation
//! and the stochastic cost offset.

use nalgebra::{DMatrix, DVector};

use crate::delay::{augment_discrete, stack_mimo, AugmentedDiscreteSystem, MimoDelaySystem};
use crate::error::{Error, Result};
use crate::ode::symmetrize;
use crate::scalar::{lit, Scalar};
use crate::solvers::{solve, ButcherTableau, DiscretizationResult, Method};

/// Continuous-time problem description.
#[derive(Debug, Clone)]
pub struct ContinuousLqProblem<T> {
    pub system: MimoDelaySystem<T>,
    /// Output weight `Q_c`, symmetric positive semidefinite.
    pub weight: DMatrix<T>,
    /// Number of sampling periods in the horizon.
    pub horizon: usize,
    /// Output references per step, one entry per horizon step.
    pub references: Vec<DVector<T>>,
    /// Mean of the initial continuous state.
    pub initial_mean: DVector<T>,
    /// Covariance of the initial continuous state.
    pub initial_cov: DMatrix<T>,
}

/// Discretization options: method, tableau for the step-based methods, and
/// whether the stochastic quantities are produced.
#[derive(Debug, Clone)]
pub struct DiscretizeOptions<T> {
    pub method: Method,
    pub tableau: ButcherTableau<T>,
    pub stochastic: bool,
}

impl<T: Scalar> DiscretizeOptions<T> {
    pub fn new(method: Method) -> Self {
        DiscretizeOptions {
            method,
            tableau: ButcherTableau::classic_rk4(),
            stochastic: true,
        }
    }

    pub fn deterministic(mut self) -> Self {
        self.stochastic = false;
        self
    }

    pub fn with_tableau(mut self, tab: ButcherTableau<T>) -> Self {
        self.tableau = tab;
        self
    }
}

/// Discrete-time equivalent of a continuous LQ problem. The cost weights act
/// on the augmented coordinate `[x; u_o; u]`.
#[derive(Debug, Clone)]
pub struct DiscreteLqProblem<T> {
    pub system: AugmentedDiscreteSystem<T>,
    pub q: DMatrix<T>,
    pub m: DMatrix<T>,
    /// Affine cost coefficients `q_k = m * z_ref_k`.
    pub q_lin: Vec<DVector<T>>,
    /// Constant cost terms per step.
    pub rho: Vec<T>,
    /// Process noise covariance over the continuous state block (stochastic mode).
    pub r_ww: Option<DMatrix<T>>,
    /// Stochastic cost offsets per step (stochastic mode).
    pub rho_s: Option<Vec<T>>,
    /// Output map at the sampling instant.
    pub gamma: DMatrix<T>,
    /// Integral of `tr(C'Q_c C R_ww(s))` over one period.
    pub rho_w: T,
    /// Raw solver output the problem was assembled from.
    pub discretization: DiscretizationResult<T>,
}

impl<T: Scalar> DiscreteLqProblem<T> {
    /// Deterministic stage cost `1/2 [x;u]'Q[x;u] + q_k'[x;u] + rho_k`.
    pub fn stage_cost(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> T {
        let mut xu = DVector::zeros(x.len() + u.len());
        xu.rows_mut(0, x.len()).copy_from(x);
        xu.rows_mut(x.len(), u.len()).copy_from(u);
        let quad = (xu.transpose() * &self.q * &xu)[(0, 0)];
        let lin = self.q_lin[k].dot(&xu);
        lit::<T>(0.5) * quad + lin + self.rho[k]
    }

    /// Expected cost of an input sequence from the initial mean state:
    /// the deterministic stage costs plus the stochastic offsets.
    pub fn expected_cost(&self, x0: &DVector<T>, inputs: &[DVector<T>]) -> T {
        let mut x = x0.clone();
        let mut total = T::zero();
        for (k, u) in inputs.iter().enumerate() {
            total += self.stage_cost(k, &x, u);
            if let Some(rho_s) = &self.rho_s {
                total += rho_s[k];
            }
            x = &self.system.a * x + &self.system.b * u;
        }
        total
    }
}

/// Discretize a continuous LQ problem with the chosen method.
pub fn discretize<T: Scalar>(
    problem: &ContinuousLqProblem<T>,
    options: &DiscretizeOptions<T>,
) -> Result<DiscreteLqProblem<T>> {
    if problem.references.len() != problem.horizon {
        return Err(Error::ReferenceLength {
            expected: problem.horizon,
            found: problem.references.len(),
        });
    }
    let coeffs = stack_mimo(&problem.system)?;
    let ts = problem.system.sample_time();
    let g_c = problem.system.noise_gain_or_empty();
    let result = solve(
        &coeffs,
        &problem.weight,
        &g_c,
        ts,
        options.method,
        &options.tableau,
    )?;
    let system = augment_discrete(
        &result.a,
        &result.b_o,
        &coeffs.d_o,
        &coeffs.c,
        coeffs.m_bar,
        coeffs.n_u,
    )?;

    let mut q_lin = Vec::with_capacity(problem.horizon);
    let mut rho = Vec::with_capacity(problem.horizon);
    for z_ref in &problem.references {
        let (qk, rk) = affine_terms(&result.m, z_ref, &problem.weight, ts)?;
        q_lin.push(qk);
        rho.push(rk);
    }

    let (r_ww, rho_s) = if options.stochastic {
        let covariances = propagate_covariance(
            &problem.initial_cov,
            &result.a,
            &result.r_ww,
            problem.horizon,
        )?;
        let aug_dim = system.state_dim();
        let mut offsets = Vec::with_capacity(problem.horizon);
        for p_k in covariances.iter().take(problem.horizon) {
            let padded = pad_covariance(p_k, aug_dim + coeffs.n_u);
            offsets.push(stochastic_offset(&result.q, &padded, result.rho_w)?);
        }
        (Some(result.r_ww.clone()), Some(offsets))
    } else {
        (None, None)
    };

    Ok(DiscreteLqProblem {
        system,
        q: result.q.clone(),
        m: result.m.clone(),
        q_lin,
        rho,
        r_ww,
        rho_s,
        gamma: result.gamma.clone(),
        rho_w: result.rho_w,
        discretization: result,
    })
}

/// Affine stage-cost terms for one reference value:
/// `q_k = m z_ref` and `rho_k = 1/2 z_ref' Q_c z_ref ts`.
pub fn affine_terms<T: Scalar>(
    m: &DMatrix<T>,
    z_ref: &DVector<T>,
    q_c: &DMatrix<T>,
    ts: T,
) -> Result<(DVector<T>, T)> {
    if m.ncols() != z_ref.len() {
        return Err(Error::dim("affine reference", m.ncols(), z_ref.len()));
    }
    if q_c.nrows() != z_ref.len() || q_c.ncols() != z_ref.len() {
        return Err(Error::dim("affine weight", z_ref.len(), q_c.nrows()));
    }
    let q_k = m * z_ref;
    let rho = lit::<T>(0.5) * (z_ref.transpose() * q_c * z_ref)[(0, 0)] * ts;
    Ok((q_k, rho))
}

/// Propagate the state covariance `P_{k+1} = A P_k A' + R_ww` over `n` steps,
/// returning `P_0 .. P_n`.
pub fn propagate_covariance<T: Scalar>(
    p0: &DMatrix<T>,
    a: &DMatrix<T>,
    r_ww: &DMatrix<T>,
    n: usize,
) -> Result<Vec<DMatrix<T>>> {
    for (name, m) in [("p0", p0), ("r_ww", r_ww)] {
        let asym = one_sided_asymmetry(m);
        if asym > lit::<T>(1e-10) {
            let _ = name;
            return Err(Error::AsymmetricCovariance(asym.to_f64().unwrap_or(f64::NAN)));
        }
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(symmetrize(p0));
    for k in 0..n {
        let next = a * &out[k] * a.transpose() + r_ww;
        out.push(symmetrize(&next));
    }
    Ok(out)
}

fn one_sided_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Zero-pad a continuous-state covariance over the `[x; u_o; u]` coordinate.
pub fn pad_covariance<T: Scalar>(p: &DMatrix<T>, dim: usize) -> DMatrix<T> {
    let mut padded = DMatrix::zeros(dim, dim);
    padded.view_mut((0, 0), (p.nrows(), p.ncols())).copy_from(p);
    padded
}

/// Stochastic cost offset `rho_s = 1/2 (tr(Q P_bar) + rho_w)`.
pub fn stochastic_offset<T: Scalar>(
    q: &DMatrix<T>,
    p_bar: &DMatrix<T>,
    rho_w: T,
) -> Result<T> {
    if q.nrows() != p_bar.nrows() || q.ncols() != p_bar.ncols() {
        return Err(Error::dim(
            "stochastic offset",
            format!("{}x{}", q.nrows(), q.ncols()),
            format!("{}x{}", p_bar.nrows(), p_bar.ncols()),
        ));
    }
    Ok(lit::<T>(0.5) * ((q * p_bar).trace() + rho_w))
}

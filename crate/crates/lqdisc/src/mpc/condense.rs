//! Condensing: eliminate the states from the finite-horizon problem to get a
//! dense quadratic program in the stacked input sequence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Per-channel box and rate-of-movement bounds, broadcast over the horizon.
#[derive(Debug, Clone)]
pub struct BoxBounds<T> {
    pub u_min: DVector<T>,
    pub u_max: DVector<T>,
    pub du_min: DVector<T>,
    pub du_max: DVector<T>,
}

impl<T: Scalar> BoxBounds<T> {
    pub fn new(
        u_min: DVector<T>,
        u_max: DVector<T>,
        du_min: DVector<T>,
        du_max: DVector<T>,
    ) -> Result<Self> {
        let n = u_min.len();
        if u_max.len() != n || du_min.len() != n || du_max.len() != n {
            return Err(Error::dim("bounds", n, u_max.len()));
        }
        for k in 0..n {
            if u_min[k] > u_max[k] || du_min[k] > du_max[k] {
                return Err(Error::InfeasibleBounds(k));
            }
        }
        Ok(BoxBounds {
            u_min,
            u_max,
            du_min,
            du_max,
        })
    }

    /// Unbounded box for unconstrained problems.
    pub fn unbounded(n_u: usize) -> Self {
        let inf = T::from_f64(f64::INFINITY).unwrap();
        BoxBounds {
            u_min: DVector::from_element(n_u, -inf),
            u_max: DVector::from_element(n_u, inf),
            du_min: DVector::from_element(n_u, -inf),
            du_max: DVector::from_element(n_u, inf),
        }
    }
}

/// Condensed quadratic program `min 1/2 u'Hu + g'u` over the stacked inputs,
/// subject to box and rate bounds.
#[derive(Debug, Clone)]
pub struct CondensedQp<T> {
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub bounds: BoxBounds<T>,
    pub n_u: usize,
    pub horizon: usize,
}

/// Condense a finite-horizon problem with stage cost
/// `1/2 [x;u]'Q[x;u] + q_k'[x;u]` over `x_{k+1} = A x_k + B u_k`.
pub fn condense<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    q_lin: &[DVector<T>],
    x0: &DVector<T>,
    horizon: usize,
    bounds: BoxBounds<T>,
) -> Result<CondensedQp<T>> {
    let condenser = Condenser::new(a, b, q, horizon, bounds)?;
    let g = condenser.gradient(x0, q_lin)?;
    Ok(CondensedQp {
        h: condenser.h,
        g,
        bounds: condenser.bounds,
        n_u: condenser.n_u,
        horizon,
    })
}

/// Precomputed condensing maps: the Hessian is constant over a closed-loop
/// run, only the gradient depends on the current state and references.
#[derive(Debug, Clone)]
pub struct Condenser<T> {
    pub h: DMatrix<T>,
    /// Gradient contribution of the initial state: `sum_k T_k' Q [A^k; 0]`.
    grad_state: DMatrix<T>,
    /// Per-step transposed prediction maps `[Gamma_k; I_k]'`.
    maps: Vec<DMatrix<T>>,
    pub bounds: BoxBounds<T>,
    pub n_u: usize,
    pub n_x: usize,
    pub horizon: usize,
}

impl<T: Scalar> Condenser<T> {
    pub fn new(
        a: &DMatrix<T>,
        b: &DMatrix<T>,
        q: &DMatrix<T>,
        horizon: usize,
        bounds: BoxBounds<T>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::ZeroSteps);
        }
        let n_x = a.nrows();
        let n_u = b.ncols();
        if b.nrows() != n_x {
            return Err(Error::dim("condense b rows", n_x, b.nrows()));
        }
        let dim = n_x + n_u;
        if q.nrows() != dim || q.ncols() != dim {
            return Err(Error::dim(
                "condense weight",
                format!("{dim}x{dim}"),
                format!("{}x{}", q.nrows(), q.ncols()),
            ));
        }
        if bounds.u_min.len() != n_u {
            return Err(Error::dim("condense bounds", n_u, bounds.u_min.len()));
        }

        let vars = horizon * n_u;
        let mut h = DMatrix::<T>::zeros(vars, vars);
        let mut grad_state = DMatrix::<T>::zeros(vars, n_x);
        let mut maps = Vec::with_capacity(horizon);

        // x_k = A^k x_0 + sum_{i<k} A^{k-1-i} B u_i; the stacked map
        // [Gamma_k; I_k] sends the input sequence to [x_k; u_k].
        let mut gamma_k = DMatrix::<T>::zeros(n_x, vars);
        let mut a_pow = DMatrix::<T>::identity(n_x, n_x); // A^k
        for k in 0..horizon {
            let mut stacked = DMatrix::<T>::zeros(dim, vars);
            stacked
                .view_mut((0, 0), (n_x, vars))
                .copy_from(&gamma_k);
            for r in 0..n_u {
                stacked[(n_x + r, k * n_u + r)] = T::one();
            }
            let weighted = q * &stacked;
            h += stacked.transpose() * &weighted;
            // Q [A^k x0; 0] contribution through the same map.
            grad_state += stacked.transpose() * q.columns(0, n_x) * &a_pow;
            maps.push(stacked.transpose());

            // Advance: Gamma_{k+1} = A Gamma_k + B in block column k.
            gamma_k = a * gamma_k;
            gamma_k.view_mut((0, k * n_u), (n_x, n_u)).copy_from(b);
            a_pow = a * a_pow;
        }

        let mut condenser = Condenser {
            h,
            grad_state,
            maps,
            bounds,
            n_u,
            n_x,
            horizon,
        };
        condenser.ensure_strictly_convex();
        Ok(condenser)
    }

    /// Gradient for the current initial state and affine cost coefficients.
    pub fn gradient(&self, x0: &DVector<T>, q_lin: &[DVector<T>]) -> Result<DVector<T>> {
        if x0.len() != self.n_x {
            return Err(Error::dim("condense x0", self.n_x, x0.len()));
        }
        if q_lin.len() != self.horizon {
            return Err(Error::ReferenceLength {
                expected: self.horizon,
                found: q_lin.len(),
            });
        }
        let mut g = &self.grad_state * x0;
        for (map, qk) in self.maps.iter().zip(q_lin) {
            g += map * qk;
        }
        Ok(g)
    }

    pub fn qp(&self, x0: &DVector<T>, q_lin: &[DVector<T>]) -> Result<CondensedQp<T>> {
        Ok(CondensedQp {
            h: self.h.clone(),
            g: self.gradient(x0, q_lin)?,
            bounds: self.bounds.clone(),
            n_u: self.n_u,
            horizon: self.horizon,
        })
    }

    /// Guarantee a strictly convex, numerically solvable program. Input
    /// moves beyond the reach of any output within the horizon (long delays)
    /// make the condensed Hessian exactly singular, so eigenvalues are
    /// floored relative to the largest one; well-conditioned problems are
    /// left untouched.
    fn ensure_strictly_convex(&mut self) {
        let sym = (self.h.clone() + self.h.transpose()).scale(lit::<T>(0.5));
        self.h = sym;
        let eig = self.h.clone().symmetric_eigen();
        let max = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |m, &x| if x > m { x } else { m });
        let min = eig
            .eigenvalues
            .iter()
            .fold(T::from_f64(f64::INFINITY).unwrap(), |m, &x| if x < m { x } else { m });
        let floor = (lit::<T>(1e-7) * max.max(T::one())).max(lit::<T>(1e-9));
        if min < floor {
            let clamped = eig.eigenvalues.map(|x| x.max(floor));
            self.h = &eig.eigenvectors
                * DMatrix::from_diagonal(&clamped)
                * eig.eigenvectors.transpose();
            self.h = (self.h.clone() + self.h.transpose()).scale(lit::<T>(0.5));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_step_reduces_to_input_block() {
        // With one stage the state term is constant, only the (u,u) block of Q remains.
        let a = DMatrix::from_element(1, 1, 0.7);
        let b = DMatrix::from_element(1, 1, 1.3);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let q_lin = vec![DVector::from_vec(vec![0.4, -0.2])];
        let x0 = DVector::from_element(1, 2.0);
        let qp = condense(&a, &b, &q, &q_lin, &x0, 1, BoxBounds::unbounded(1)).unwrap();
        assert_relative_eq!(qp.h[(0, 0)], 1.5, epsilon = 1e-9);
        // g = Q_ux x0 + q_0 projected on u.
        assert_relative_eq!(qp.g[0], 0.3 * 2.0 + (-0.2), epsilon = 1e-12);
    }

    #[test]
    fn brute_force_quadratic_expansion_two_steps() {
        // A = 0, B = 1, Q = I, N = 2: phi = 1/2 (x0^2 + 2 u0^2 + u1^2),
        // frozen from expanding sum of stage costs by hand.
        let a = DMatrix::from_element(1, 1, 0.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::identity(2, 2);
        let q_lin = vec![DVector::zeros(2); 2];
        let x0 = DVector::zeros(1);
        let qp = condense(&a, &b, &q, &q_lin, &x0, 2, BoxBounds::unbounded(1)).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((qp.h - expect).norm() < 1e-8);
        assert_eq!(qp.g, DVector::zeros(2));
    }

    #[test]
    fn gradient_matches_fresh_condense() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let mut q = DMatrix::identity(3, 3);
        q[(0, 2)] = 0.2;
        q[(2, 0)] = 0.2;
        let q_lin: Vec<_> = (0..4)
            .map(|k| DVector::from_vec(vec![k as f64, -0.5, 0.1]))
            .collect();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let bounds = BoxBounds::unbounded(1);
        let condenser = Condenser::new(&a, &b, &q, 4, bounds.clone()).unwrap();
        let qp = condense(&a, &b, &q, &q_lin, &x0, 4, bounds).unwrap();
        let g = condenser.gradient(&x0, &q_lin).unwrap();
        assert!((g - qp.g).norm() < 1e-12);
    }
}

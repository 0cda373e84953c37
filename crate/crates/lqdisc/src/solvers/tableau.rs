//! Butcher tableaus driving the fixed-step and step-doubling solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Runge-Kutta coefficient table. Explicit tableaus have a strictly lower
/// triangular stage matrix; implicit ones are handled by linear stage solves.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau<T> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub c: DVector<T>,
}

impl<T: Scalar> ButcherTableau<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>, c: DVector<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::BadTableau("stage matrix must be square".into()));
        }
        let s = a.nrows();
        if b.len() != s || c.len() != s {
            return Err(Error::BadTableau(format!(
                "weights and nodes must have {s} entries"
            )));
        }
        let sum = b.iter().fold(T::zero(), |acc, x| acc + *x);
        if (sum - T::one()).abs() > T::from_f64(1e-12).unwrap() {
            return Err(Error::BadTableau("weights must sum to one".into()));
        }
        Ok(ButcherTableau { a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn is_explicit(&self) -> bool {
        for i in 0..self.a.nrows() {
            for j in i..self.a.ncols() {
                if self.a[(i, j)] != T::zero() {
                    return false;
                }
            }
        }
        true
    }

    pub fn explicit_euler() -> Self {
        Self::from_f64(&[&[0.0]], &[1.0], &[0.0])
    }

    pub fn midpoint() -> Self {
        Self::from_f64(&[&[0.0, 0.0], &[0.5, 0.0]], &[0.0, 1.0], &[0.0, 0.5])
    }

    pub fn heun() -> Self {
        Self::from_f64(&[&[0.0, 0.0], &[1.0, 0.0]], &[0.5, 0.5], &[0.0, 1.0])
    }

    pub fn classic_rk4() -> Self {
        Self::from_f64(
            &[
                &[0.0, 0.0, 0.0, 0.0],
                &[0.5, 0.0, 0.0, 0.0],
                &[0.0, 0.5, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            &[0.0, 0.5, 0.5, 1.0],
        )
    }

    pub fn implicit_euler() -> Self {
        Self::from_f64(&[&[1.0]], &[1.0], &[1.0])
    }

    pub fn implicit_midpoint() -> Self {
        Self::from_f64(&[&[0.5]], &[1.0], &[0.5])
    }

    pub fn trapezoidal() -> Self {
        Self::from_f64(&[&[0.0, 0.0], &[0.5, 0.5]], &[0.5, 0.5], &[0.0, 1.0])
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "euler" => Some(Self::explicit_euler()),
            "midpoint" => Some(Self::midpoint()),
            "heun" => Some(Self::heun()),
            "rk4" => Some(Self::classic_rk4()),
            "implicit-euler" => Some(Self::implicit_euler()),
            "implicit-midpoint" => Some(Self::implicit_midpoint()),
            "trapezoidal" => Some(Self::trapezoidal()),
            _ => None,
        }
    }

    pub const NAMES: &'static [&'static str] = &[
        "euler",
        "midpoint",
        "heun",
        "rk4",
        "implicit-euler",
        "implicit-midpoint",
        "trapezoidal",
    ];

    fn from_f64(a: &[&[f64]], b: &[f64], c: &[f64]) -> Self {
        let s = b.len();
        let a = DMatrix::from_fn(s, s, |i, j| T::from_f64(a[i][j]).unwrap());
        let b = DVector::from_iterator(s, b.iter().map(|x| T::from_f64(*x).unwrap()));
        let c = DVector::from_iterator(s, c.iter().map(|x| T::from_f64(*x).unwrap()));
        ButcherTableau { a, b, c }
    }
}

//! Transfer functions and their controllable-canonical state-space realization.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::delay::SisoDelayChannel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Proper SISO transfer function with an input delay. Coefficients are in
/// descending powers of `s`, so `den = [16.7, 1.0]` means `16.7 s + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction<T> {
    pub numerator: Vec<T>,
    pub denominator: Vec<T>,
    pub delay: T,
}

impl<T: Scalar> TransferFunction<T> {
    pub fn new(numerator: Vec<T>, denominator: Vec<T>, delay: T) -> Result<Self> {
        let num = trim_leading_zeros(numerator);
        let den = trim_leading_zeros(denominator);
        if den.is_empty() || den[0] == T::zero() {
            return Err(Error::ZeroLeadingDenominator);
        }
        if num.len() > den.len() {
            return Err(Error::ImproperTransferFunction);
        }
        if !delay.is_finite() || delay < T::zero() {
            return Err(Error::InvalidDelay(delay.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(TransferFunction {
            numerator: num,
            denominator: den,
            delay,
        })
    }

    /// Steady-state gain `num(0)/den(0)`; infinite for integrating systems.
    pub fn dc_gain(&self) -> T {
        let num0 = self.numerator.last().copied().unwrap_or(T::zero());
        let den0 = self.denominator.last().copied().unwrap_or(T::zero());
        num0 / den0
    }

    pub fn order(&self) -> usize {
        self.denominator.len() - 1
    }
}

fn trim_leading_zeros<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    while v.len() > 1 && v[0] == T::zero() {
        v.remove(0);
    }
    v
}

/// Controllable-canonical realization of a proper transfer function.
pub fn tf_realize<T: Scalar>(tf: &TransferFunction<T>) -> Result<SisoDelayChannel<T>> {
    let n = tf.order();
    let lead = tf.denominator[0];
    // Monic denominator s^n + a_{n-1} s^{n-1} + ... + a_0, constant term last.
    let a_coeffs: Vec<T> = tf.denominator[1..].iter().map(|x| *x / lead).collect();
    // Numerator padded to length n + 1 and scaled by the same factor.
    let mut b_coeffs = vec![T::zero(); n + 1 - tf.numerator.len()];
    b_coeffs.extend(tf.numerator.iter().map(|x| *x / lead));

    let feedthrough = b_coeffs[0];
    if n == 0 {
        return SisoDelayChannel::new(
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            RowDVector::zeros(0),
            feedthrough,
            tf.delay,
        );
    }

    let mut a = DMatrix::<T>::zeros(n, n);
    for r in 0..n - 1 {
        a[(r, r + 1)] = T::one();
    }
    for k in 0..n {
        // a_coeffs is ordered a_{n-1} .. a_0; the companion row wants
        // [-a_0, -a_1, ..., -a_{n-1}].
        a[(n - 1, k)] = -a_coeffs[n - 1 - k];
    }
    let mut b = DVector::<T>::zeros(n);
    b[n - 1] = T::one();
    let mut c = RowDVector::<T>::zeros(n);
    for k in 0..n {
        // c_k = b_k - a_k d, reading both descending-power lists from the back.
        c[k] = b_coeffs[n - k] - a_coeffs[n - 1 - k] * feedthrough;
    }

    SisoDelayChannel::new(a, b, c, feedthrough, tf.delay)
}

//! Dense matrix exponential by scaling and squaring with diagonal Pade
//! approximants, degree selected from the 1-norm.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Maximum absolute column sum.
pub fn one_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut norm = T::zero();
    for j in 0..m.ncols() {
        let mut sum = T::zero();
        for i in 0..m.nrows() {
            sum += m[(i, j)].abs();
        }
        if sum > norm {
            norm = sum;
        }
    }
    norm
}

/// `e^m` for a square matrix with finite entries.
pub fn expm<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::dim(
            "expm",
            "square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Nonfinite("expm argument"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = one_norm(m).to_f64().unwrap_or(f64::INFINITY);
    let (u, v, squarings) = if norm < 1.495_585_217_958_292e-2 {
        let (u, v) = pade(m, &PADE3);
        (u, v, 0u32)
    } else if norm < 2.539_398_330_063_23e-1 {
        let (u, v) = pade(m, &PADE5);
        (u, v, 0)
    } else if norm < 9.504_178_996_162_932e-1 {
        let (u, v) = pade(m, &PADE7);
        (u, v, 0)
    } else if norm < 2.097_847_961_257_068 {
        let (u, v) = pade(m, &PADE9);
        (u, v, 0)
    } else {
        const THETA13: f64 = 5.371_920_351_148_152;
        let squarings = ((norm / THETA13).log2().ceil()).max(0.0) as u32;
        let scaled = m.scale(lit::<T>(0.5f64.powi(squarings as i32)));
        let (u, v) = pade13(&scaled);
        (u, v, squarings)
    };

    // Pade approximant is (V + U) / (V - U).
    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::Nonfinite("pade denominator"))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Odd/even split of the Pade polynomial: `U = m * (odd part)`, `V = even part`.
fn pade<T: Scalar, const K: usize>(m: &DMatrix<T>, coeffs: &[f64; K]) -> (DMatrix<T>, DMatrix<T>) {
    let n = m.nrows();
    let m2 = m * m;
    let mut even = DMatrix::identity(n, n).scale(lit::<T>(coeffs[0]));
    let mut odd = DMatrix::identity(n, n).scale(lit::<T>(coeffs[1]));
    let mut power = DMatrix::identity(n, n);
    for k in (2..K).step_by(2) {
        power = &power * &m2;
        even += power.scale(lit::<T>(coeffs[k]));
        if k + 1 < K {
            odd += power.scale(lit::<T>(coeffs[k + 1]));
        }
    }
    (m * odd, even)
}

fn pade13<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let b = PADE13;
    let n = m.nrows();
    let id = DMatrix::<T>::identity(n, n);
    let m2 = m * m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;

    let tmp = m6.scale(lit(b[13])) + m4.scale(lit(b[11])) + m2.scale(lit(b[9]));
    let u_inner =
        &m6 * tmp + m6.scale(lit(b[7])) + m4.scale(lit(b[5])) + m2.scale(lit(b[3])) + id.scale(lit(b[1]));
    let u = m * u_inner;

    let tmp = m6.scale(lit(b[12])) + m4.scale(lit(b[10])) + m2.scale(lit(b[8]));
    let v =
        &m6 * tmp + m6.scale(lit(b[6])) + m4.scale(lit(b[4])) + m2.scale(lit(b[2])) + id.scale(lit(b[0]));
    (u, v)
}

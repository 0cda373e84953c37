//! Continuous-time linear systems with per-channel input delays, their stacked
//! coefficient matrices and the delay-free augmented discrete realization.
//!
//! A MIMO model is an `n_z x n_u` grid of SISO channels. Each channel carries
//! its own state block; the stacked state orders blocks column by column
//! (input index outermost, output index innermost). Fractional delays are
//! split as `tau / T_s = m - v` with integer `m >= 0` and `v` in `[0, 1)`, and
//! the discrete realization absorbs the last `m_bar = max m` inputs into the
//! state so the delays vanish.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Integer and fractional delay constants of one channel: `tau/ts = steps - fraction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayConstants<T> {
    /// Delay expressed in sampling periods, `tau / ts`.
    pub ratio: T,
    /// Number of sampling periods rounded up.
    pub steps: usize,
    /// Fractional part in `[0, 1)`, with `ratio = steps - fraction`.
    pub fraction: T,
}

impl<T: Scalar> DelayConstants<T> {
    pub fn new(tau: T, ts: T) -> Result<Self> {
        if !ts.is_finite() || ts <= T::zero() {
            return Err(Error::NonpositiveSampleTime(ts.to_f64().unwrap_or(f64::NAN)));
        }
        if !tau.is_finite() || tau < T::zero() {
            return Err(Error::InvalidDelay(tau.to_f64().unwrap_or(f64::NAN)));
        }
        let ratio = tau / ts;
        let ceil = ratio.ceil();
        let mut steps = ceil.to_usize().ok_or(Error::Nonfinite("delay ratio"))?;
        let mut fraction = ceil - ratio;
        // A ratio a hair above an integer can round the fraction up to one;
        // collapse to the nearest representable split with zero fraction.
        if fraction >= T::one() {
            steps -= 1;
            fraction = T::zero();
        }
        Ok(DelayConstants {
            ratio,
            steps,
            fraction,
        })
    }
}

/// One SISO channel: `dx = a x + b u(t - delay)`, `z = c x + d u(t - delay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SisoDelayChannel<T> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub c: RowDVector<T>,
    pub d: T,
    pub delay: T,
}

impl<T: Scalar> SisoDelayChannel<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>, c: RowDVector<T>, d: T, delay: T) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim("channel a", "square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(Error::dim("channel b", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::dim("channel c", n, c.ncols()));
        }
        if !delay.is_finite() || delay < T::zero() {
            return Err(Error::InvalidDelay(delay.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(SisoDelayChannel { a, b, c, d, delay })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// An `n_z x n_u` grid of SISO delay channels plus optional process-noise gain.
#[derive(Debug, Clone)]
pub struct MimoDelaySystem<T> {
    channels: Vec<Vec<SisoDelayChannel<T>>>,
    noise_gain: Option<DMatrix<T>>,
    sample_time: T,
}

impl<T: Scalar> MimoDelaySystem<T> {
    pub fn new(channels: Vec<Vec<SisoDelayChannel<T>>>, sample_time: T) -> Result<Self> {
        if !sample_time.is_finite() || sample_time <= T::zero() {
            return Err(Error::NonpositiveSampleTime(
                sample_time.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if channels.is_empty() || channels[0].is_empty() {
            return Err(Error::dim("channel grid", "nonempty", "empty"));
        }
        let n_u = channels[0].len();
        for (i, row) in channels.iter().enumerate() {
            if row.len() != n_u {
                return Err(Error::RaggedGrid {
                    row: i,
                    expected: n_u,
                    found: row.len(),
                });
            }
        }
        Ok(MimoDelaySystem {
            channels,
            noise_gain: None,
            sample_time,
        })
    }

    /// Attach a process-noise gain on the stacked state (`G_c`), rows must
    /// match the stacked state dimension.
    pub fn with_noise_gain(mut self, g: DMatrix<T>) -> Result<Self> {
        let n_x = self.state_dim();
        if g.nrows() != n_x {
            return Err(Error::dim("noise gain rows", n_x, g.nrows()));
        }
        self.noise_gain = Some(g);
        Ok(self)
    }

    pub fn n_outputs(&self) -> usize {
        self.channels.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.channels[0].len()
    }

    pub fn sample_time(&self) -> T {
        self.sample_time
    }

    pub fn channel(&self, output: usize, input: usize) -> &SisoDelayChannel<T> {
        &self.channels[output][input]
    }

    /// Total stacked state dimension over all channels.
    pub fn state_dim(&self) -> usize {
        let mut n = 0;
        for j in 0..self.n_inputs() {
            for i in 0..self.n_outputs() {
                n += self.channels[i][j].state_dim();
            }
        }
        n
    }

    pub fn noise_gain(&self) -> Option<&DMatrix<T>> {
        self.noise_gain.as_ref()
    }

    /// Noise gain as a matrix, defaulting to zero columns when absent.
    pub fn noise_gain_or_empty(&self) -> DMatrix<T> {
        match &self.noise_gain {
            Some(g) => g.clone(),
            None => DMatrix::zeros(self.state_dim(), 0),
        }
    }
}

/// Stacked continuous-time coefficients of a MIMO delay system.
#[derive(Debug, Clone)]
pub struct StackedCoefficients<T> {
    /// Block-diagonal state matrix over all channel blocks.
    pub a: DMatrix<T>,
    /// Block-diagonal fractional delay gains, `v_ij I` per channel block.
    pub v: DMatrix<T>,
    /// Input coefficient selecting `u_{k - m_ij}` per channel row block.
    pub b1: DMatrix<T>,
    /// Input coefficient selecting `u_{k - m_ij + 1}` per channel row block.
    pub b2: DMatrix<T>,
    /// `v (b2 - b1)`.
    pub b2_bar: DMatrix<T>,
    /// Output map from the stacked state.
    pub c: DMatrix<T>,
    /// Feedthrough over the stacked input, nonzero only in `u_{k - m_ij}` blocks.
    pub d_o: DMatrix<T>,
    /// Largest integer delay constant over the grid.
    pub m_bar: usize,
    /// Integer delay constants `m_ij`.
    pub m_grid: Vec<Vec<usize>>,
    pub n_x: usize,
    pub n_u: usize,
    pub n_z: usize,
}

impl<T: Scalar> StackedCoefficients<T> {
    /// Number of columns in the stacked-input coordinate, `(m_bar + 1) n_u`.
    pub fn input_cols(&self) -> usize {
        (self.m_bar + 1) * self.n_u
    }

    /// Dimension of the combined `[x; u_o; u]` coordinate.
    pub fn gamma_dim(&self) -> usize {
        self.n_x + self.input_cols()
    }
}

/// Block selector: identity in block `block` (1-based) of `n_blocks` blocks,
/// each `n_u` wide. Picks `u_{k - n_blocks + block}` from the stacked input.
pub fn selection_block<T: Scalar>(
    block: usize,
    n_blocks: usize,
    n_u: usize,
) -> Result<DMatrix<T>> {
    if block == 0 || block > n_blocks {
        return Err(Error::SelectorOutOfRange { block, n_blocks });
    }
    let mut e = DMatrix::zeros(n_u, n_blocks * n_u);
    for r in 0..n_u {
        e[(r, (block - 1) * n_u + r)] = T::one();
    }
    Ok(e)
}

/// Stack a MIMO delay system into its continuous coefficient matrices.
pub fn stack_mimo<T: Scalar>(sys: &MimoDelaySystem<T>) -> Result<StackedCoefficients<T>> {
    let n_z = sys.n_outputs();
    let n_u = sys.n_inputs();
    let ts = sys.sample_time();

    let mut m_grid = vec![vec![0usize; n_u]; n_z];
    let mut v_grid = vec![vec![T::zero(); n_u]; n_z];
    let mut m_bar = 0usize;
    for i in 0..n_z {
        for j in 0..n_u {
            let dc = DelayConstants::new(sys.channel(i, j).delay, ts)?;
            m_grid[i][j] = dc.steps;
            v_grid[i][j] = dc.fraction;
            m_bar = m_bar.max(dc.steps);
        }
    }

    let n_x = sys.state_dim();
    let cols = (m_bar + 1) * n_u;
    let mut a = DMatrix::zeros(n_x, n_x);
    let mut v = DMatrix::zeros(n_x, n_x);
    let mut b1 = DMatrix::zeros(n_x, cols);
    let mut b2 = DMatrix::zeros(n_x, cols);
    let mut c = DMatrix::zeros(n_z, n_x);
    let mut d_o = DMatrix::zeros(n_z, cols);

    // Channel state blocks stacked column by column: (1,1), (2,1), ..., (n_z, n_u).
    let mut offset = 0usize;
    for j in 0..n_u {
        for i in 0..n_z {
            let ch = sys.channel(i, j);
            let n = ch.state_dim();
            let m_ij = m_grid[i][j];
            let v_ij = v_grid[i][j];

            a.view_mut((offset, offset), (n, n)).copy_from(&ch.a);
            for r in 0..n {
                v[(offset + r, offset + r)] = v_ij;
            }
            // b1 selects u_{k - m_ij}: block index m_bar - m_ij (0-based).
            let col1 = (m_bar - m_ij) * n_u + j;
            for r in 0..n {
                b1[(offset + r, col1)] = ch.b[r];
            }
            // b2 selects u_{k - m_ij + 1}; zero when v_ij = 0 (covers m_ij = 0,
            // where the selected input would not exist).
            if v_ij != T::zero() {
                let col2 = (m_bar - m_ij + 1) * n_u + j;
                for r in 0..n {
                    b2[(offset + r, col2)] = ch.b[r];
                }
            }
            c.view_mut((i, offset), (1, n)).copy_from(&ch.c);
            d_o[(i, col1)] += ch.d;

            offset += n;
        }
    }

    let b2_bar = &v * (&b2 - &b1);

    Ok(StackedCoefficients {
        a,
        v,
        b1,
        b2,
        b2_bar,
        c,
        d_o,
        m_bar,
        m_grid,
        n_x,
        n_u,
        n_z,
    })
}

/// Delay-free discrete realization with the input history absorbed into the state.
#[derive(Debug, Clone)]
pub struct AugmentedDiscreteSystem<T> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    /// Plant state dimension before augmentation.
    pub n_x: usize,
    pub m_bar: usize,
    pub n_u: usize,
}

impl<T: Scalar> AugmentedDiscreteSystem<T> {
    pub fn state_dim(&self) -> usize {
        self.n_x + self.m_bar * self.n_u
    }

    /// Initial augmented state from a plant state and the last `m_bar` inputs
    /// (oldest first). Missing history entries are zero.
    pub fn initial_state(&self, x0: &DVector<T>, history: &[DVector<T>]) -> DVector<T> {
        let mut x = DVector::zeros(self.state_dim());
        x.rows_mut(0, self.n_x).copy_from(x0);
        let pad = self.m_bar.saturating_sub(history.len());
        for (slot, u) in history.iter().enumerate().take(self.m_bar) {
            x.rows_mut(self.n_x + (pad + slot) * self.n_u, self.n_u)
                .copy_from(u);
        }
        x
    }

    /// One discrete step: returns the next state and the output at the current step.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let z = &self.c * x + &self.d * u;
        let x_next = &self.a * x + &self.b * u;
        (x_next, z)
    }

    /// Simulate the realization over an input sequence, returning outputs at
    /// each sample instant.
    pub fn simulate(
        &self,
        x0: &DVector<T>,
        history: &[DVector<T>],
        inputs: &[DVector<T>],
    ) -> Vec<DVector<T>> {
        let mut x = self.initial_state(x0, history);
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            let (x_next, z) = self.step(&x, u);
            out.push(z);
            x = x_next;
        }
        out
    }
}

/// Assemble the delay-free augmented system from discretized coefficients.
///
/// `b_o` and `d_o` carry `(m_bar + 1) n_u` columns over the stacked input;
/// the last `n_u` columns act on the current input, the rest on the history.
pub fn augment_discrete<T: Scalar>(
    a: &DMatrix<T>,
    b_o: &DMatrix<T>,
    d_o: &DMatrix<T>,
    c: &DMatrix<T>,
    m_bar: usize,
    n_u: usize,
) -> Result<AugmentedDiscreteSystem<T>> {
    let cols = (m_bar + 1) * n_u;
    if b_o.ncols() != cols {
        return Err(Error::dim("augment b_o columns", cols, b_o.ncols()));
    }
    if d_o.ncols() != cols {
        return Err(Error::dim("augment d_o columns", cols, d_o.ncols()));
    }
    let n_x = a.nrows();
    let hist = m_bar * n_u;
    let dim = n_x + hist;

    let mut a_tilde = DMatrix::zeros(dim, dim);
    a_tilde.view_mut((0, 0), (n_x, n_x)).copy_from(a);
    a_tilde
        .view_mut((0, n_x), (n_x, hist))
        .copy_from(&b_o.columns(0, hist));
    // Up-shift block: history slot r takes the value of slot r+1.
    for r in 0..m_bar.saturating_sub(1) {
        for k in 0..n_u {
            a_tilde[(n_x + r * n_u + k, n_x + (r + 1) * n_u + k)] = T::one();
        }
    }

    let mut b_tilde = DMatrix::zeros(dim, n_u);
    b_tilde
        .view_mut((0, 0), (n_x, n_u))
        .copy_from(&b_o.columns(hist, n_u));
    if m_bar > 0 {
        for k in 0..n_u {
            b_tilde[(n_x + (m_bar - 1) * n_u + k, k)] = T::one();
        }
    }

    let mut c_tilde = DMatrix::zeros(d_o.nrows(), dim);
    c_tilde.view_mut((0, 0), (d_o.nrows(), n_x)).copy_from(c);
    c_tilde
        .view_mut((0, n_x), (d_o.nrows(), hist))
        .copy_from(&d_o.columns(0, hist));

    let d_tilde = d_o.columns(hist, n_u).into_owned();

    Ok(AugmentedDiscreteSystem {
        a: a_tilde,
        b: b_tilde,
        c: c_tilde,
        d: d_tilde,
        n_x,
        m_bar,
        n_u,
    })
}

/// Reference simulation of the delayed continuous-time system with a fine
/// fixed-step integrator. The in-interval switch of the delayed input at
/// `t_k + (1 - v) T_s` is honored exactly by splitting the substep grid there.
/// Inputs before `k = 0` are zero; the initial state is zero.
pub fn dense_reference_sim<T: Scalar>(
    sys: &MimoDelaySystem<T>,
    inputs: &[DVector<T>],
    substeps: usize,
) -> Result<Vec<DVector<T>>> {
    let n_z = sys.n_outputs();
    let n_u = sys.n_inputs();
    let ts = sys.sample_time();
    let substeps = substeps.max(1);
    for (k, u) in inputs.iter().enumerate() {
        if u.nrows() != n_u {
            return Err(Error::dim("input vector", n_u, u.nrows()));
        }
        if u.iter().any(|x| !x.is_finite()) {
            let _ = k;
            return Err(Error::Nonfinite("input sequence"));
        }
    }

    let input_at = |k: isize, j: usize| -> T {
        if k < 0 {
            T::zero()
        } else {
            inputs[k as usize][j]
        }
    };

    let mut outputs = vec![DVector::<T>::zeros(n_z); inputs.len()];

    for j in 0..n_u {
        for i in 0..n_z {
            let ch = sys.channel(i, j);
            let n = ch.state_dim();
            let dc = DelayConstants::new(ch.delay, ts)?;
            let m = dc.steps as isize;
            let mut x = DVector::<T>::zeros(n);

            for k in 0..inputs.len() {
                let ki = k as isize;
                // Output at the sample instant uses u_{k - m}.
                let u_sample = input_at(ki - m, j);
                let z = &ch.c * &x;
                outputs[k][i] += z[0] + ch.d * u_sample;

                // Integrate over [t_k, t_{k+1}), splitting at the delay switch.
                let segments: [(T, T); 2] = if dc.fraction > T::zero() {
                    [
                        ((T::one() - dc.fraction) * ts, input_at(ki - m, j)),
                        (dc.fraction * ts, input_at(ki - m + 1, j)),
                    ]
                } else {
                    [(ts, input_at(ki - m, j)), (T::zero(), T::zero())]
                };
                for (len, u_val) in segments {
                    if len <= T::zero() {
                        continue;
                    }
                    let frac = (len / ts).to_f64().unwrap_or(1.0);
                    let steps = ((substeps as f64) * frac).ceil().max(1.0) as usize;
                    let h = len / lit::<T>(steps as f64);
                    let forcing = &ch.b * u_val;
                    for _ in 0..steps {
                        x = rk4_substep(&ch.a, &forcing, &x, h);
                    }
                }
            }
        }
    }

    Ok(outputs)
}

fn rk4_substep<T: Scalar>(
    a: &DMatrix<T>,
    forcing: &DVector<T>,
    x: &DVector<T>,
    h: T,
) -> DVector<T> {
    let half = lit::<T>(0.5);
    let sixth = lit::<T>(1.0 / 6.0);
    let two = lit::<T>(2.0);
    let k1 = a * x + forcing;
    let k2 = a * (x + k1.scale(half * h)) + forcing;
    let k3 = a * (x + k2.scale(half * h)) + forcing;
    let k4 = a * (x + k3.scale(h)) + forcing;
    x + (k1 + k2.scale(two) + k3.scale(two) + k4).scale(sixth * h)
}

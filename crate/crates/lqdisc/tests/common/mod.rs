//! Shared test oracles, independent of the solver paths they check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lqdisc::{expm, MimoDelaySystem, SisoDelayChannel};

/// Random stable channel: strictly diagonally dominant negative state matrix.
pub fn random_channel(rng: &mut StdRng, states: usize, delay: f64) -> SisoDelayChannel<f64> {
    let mut a = DMatrix::<f64>::zeros(states, states);
    for i in 0..states {
        for j in 0..states {
            if i != j {
                a[(i, j)] = rng.gen_range(-0.3..0.3);
            }
        }
    }
    for i in 0..states {
        let off: f64 = (0..states).filter(|j| *j != i).map(|j| a[(i, j)].abs()).sum();
        a[(i, i)] = -off - rng.gen_range(0.1..0.8);
    }
    let b = DVector::from_fn(states, |_, _| rng.gen_range(-1.0..1.0));
    let c = RowDVector::from_fn(states, |_, _| rng.gen_range(-1.0..1.0));
    let d = if rng.gen_bool(0.3) {
        rng.gen_range(-0.5..0.5)
    } else {
        0.0
    };
    SisoDelayChannel::new(a, b, c, d, delay).unwrap()
}

/// Random MIMO delay system with fractional delays and optional noise gain.
pub fn random_delay_system(
    rng: &mut StdRng,
    n_z: usize,
    n_u: usize,
    max_states: usize,
    ts: f64,
    with_noise: bool,
) -> MimoDelaySystem<f64> {
    let channels: Vec<Vec<_>> = (0..n_z)
        .map(|_| {
            (0..n_u)
                .map(|_| {
                    let states = rng.gen_range(1..=max_states);
                    // Mix of zero, integer and fractional delays.
                    let delay = match rng.gen_range(0..4) {
                        0 => 0.0,
                        1 => ts * rng.gen_range(1..3) as f64,
                        _ => ts * rng.gen_range(0.1..2.9),
                    };
                    random_channel(rng, states, delay)
                })
                .collect()
        })
        .collect();
    let sys = MimoDelaySystem::new(channels, ts).unwrap();
    if with_noise {
        let n_x = sys.state_dim();
        let g = DMatrix::from_fn(n_x, 1.max(n_x / 2), |_, _| rng.gen_range(-0.5..0.5));
        sys.with_noise_gain(g).unwrap()
    } else {
        sys
    }
}

/// Zero-order-hold input matrix by the block-exponential identity:
/// top-right block of `exp([[A, B], [0, 0]] ts)`.
pub fn zoh_input_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, m)).copy_from(b);
    let e = expm(&block.scale(ts)).unwrap();
    e.view((0, n), (n, m)).into_owned()
}

/// Infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Relative infinity-norm difference.
pub fn rel_diff(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    inf_norm(&(x - reference)) / inf_norm(reference).max(1e-300)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Outcome of the stochastic-cost Monte-Carlo comparison.
pub struct McOutcome {
    pub analytic: f64,
    pub mean: f64,
    pub std_err: f64,
}

/// Compare the analytic expected cost with a Monte-Carlo estimate built from
/// exact Gaussian substep transitions (block exponentials only). Uses a
/// two-state channel with a half-period delay so the delayed-input switch
/// falls exactly on the substep grid.
pub fn monte_carlo_expected_cost(draws: usize, substeps_per_half: usize, seed: u64) -> McOutcome {
    use lqdisc::{discretize, ContinuousLqProblem, DiscretizeOptions, Method};

    let ts = 1.0;
    let horizon = 10;
    let ch = SisoDelayChannel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.6, -0.5]),
        DVector::from_vec(vec![0.0, 1.0]),
        RowDVector::from_vec(vec![1.0, 0.3]),
        0.1,
        0.5 * ts,
    )
    .unwrap();
    let sys = MimoDelaySystem::new(vec![vec![ch.clone()]], ts)
        .unwrap()
        .with_noise_gain(DMatrix::from_column_slice(2, 1, &[0.1, 0.2]))
        .unwrap();

    let references: Vec<DVector<f64>> = (0..horizon)
        .map(|k| DVector::from_element(1, 0.3 * (k as f64 * 0.7).sin()))
        .collect();
    let inputs: Vec<DVector<f64>> = (0..horizon)
        .map(|k| DVector::from_element(1, (0.5 * k as f64).cos()))
        .collect();
    let x0_mean = DVector::from_vec(vec![0.3, -0.2]);
    let p0 = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);

    let problem = ContinuousLqProblem {
        system: sys.clone(),
        weight: DMatrix::identity(1, 1),
        horizon,
        references: references.clone(),
        initial_mean: x0_mean.clone(),
        initial_cov: p0.clone(),
    };
    let dp = discretize(&problem, &DiscretizeOptions::new(Method::MatrixExponential)).unwrap();
    let x0_aug = dp.system.initial_state(&x0_mean, &[]);
    let analytic = dp.expected_cost(&x0_aug, &inputs);

    let g = sys.noise_gain().unwrap();
    let h = ts / (2.0 * substeps_per_half as f64);
    let (a_d, b_d, r_d) = exact_substep(&ch.a, &ch.b, g, h);
    let noise_factor = psd_sqrt(&r_d);
    let init_factor = psd_sqrt(&p0);

    let mut rng = StdRng::seed_from_u64(seed);
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let input_at = |k: isize| -> f64 {
        if k < 0 {
            0.0
        } else {
            inputs[k as usize][0]
        }
    };
    for _ in 0..draws {
        let mut x = &x0_mean + &init_factor * normal_vec(&mut rng, 2);
        let mut phi = 0.0f64;
        for k in 0..horizon as isize {
            // Segment 1 sees u_{k-1}, segment 2 sees u_k (delay = ts / 2).
            for u_delayed in [input_at(k - 1), input_at(k)] {
                let zbar = references[k as usize][0];
                let f = |xv: &DVector<f64>| {
                    let z = (&ch.c * xv)[0] + ch.d * u_delayed - zbar;
                    0.5 * z * z
                };
                let mut f_left = f(&x);
                for _ in 0..substeps_per_half {
                    let w = &noise_factor * normal_vec(&mut rng, 2);
                    x = &a_d * &x + &b_d * u_delayed + w;
                    let f_right = f(&x);
                    phi += 0.5 * h * (f_left + f_right);
                    f_left = f_right;
                }
            }
        }
        sum += phi;
        sum_sq += phi * phi;
    }
    let mean = sum / draws as f64;
    let variance = (sum_sq / draws as f64 - mean * mean).max(0.0);
    McOutcome {
        analytic,
        mean,
        std_err: (variance / draws as f64).sqrt(),
    }
}

fn normal_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Exact one-substep discrete transition `(A_d, B_d, R_d)` from block
/// exponentials.
pub fn exact_substep(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    g: &DMatrix<f64>,
    h: f64,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a_d = expm(&a.scale(h)).unwrap();
    let b_d = zoh_input_matrix(a, &DMatrix::from_column_slice(n, 1, b.as_slice()), h)
        .column(0)
        .into_owned();
    let r_d = {
        let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&(-a));
        block.view_mut((0, n), (n, n)).copy_from(&(g * g.transpose()));
        block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
        let e = expm(&block.scale(h)).unwrap();
        let phi12 = e.view((0, n), (n, n)).into_owned();
        let phi22 = e.view((n, n), (n, n)).into_owned();
        let r = phi22.transpose() * phi12;
        (r.clone() + r.transpose()).scale(0.5)
    };
    (a_d, b_d, r_d)
}

pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Finite-horizon dynamic-programming solution of the unconstrained problem
/// `min sum_k 1/2 [x;u]'Q[x;u] + q_k'[x;u]` over `x_{k+1} = A x + B u`.
/// Independent of the condensing route.
pub fn dp_solution(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    q_lin: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    let horizon = q_lin.len();
    let q_xx = q.view((0, 0), (n, n)).into_owned();
    let q_xu = q.view((0, n), (n, m)).into_owned();
    let q_uu = q.view((n, n), (m, m)).into_owned();

    let mut p_next = DMatrix::<f64>::zeros(n, n);
    let mut lin_next = DVector::<f64>::zeros(n);
    let mut gains: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(horizon);
    for k in (0..horizon).rev() {
        let qx = q_lin[k].rows(0, n).into_owned();
        let qu = q_lin[k].rows(n, m).into_owned();
        let g = &q_uu + b.transpose() * &p_next * b;
        let f = q_xu.transpose() + b.transpose() * &p_next * a;
        let g_ff = qu + b.transpose() * &lin_next;
        let g_inv = g.clone().lu();
        let gain = -g_inv.solve(&f).unwrap();
        let offset = -g_inv.solve(&g_ff).unwrap();
        let p = &q_xx + a.transpose() * &p_next * a + f.transpose() * &gain;
        let lin = qx + a.transpose() * &lin_next + f.transpose() * &offset;
        p_next = (p.clone() + p.transpose()).scale(0.5);
        lin_next = lin;
        gains.push((gain, offset));
    }
    gains.reverse();

    let mut x = x0.clone();
    let mut inputs = Vec::with_capacity(horizon);
    for (gain, offset) in &gains {
        let u = gain * &x + offset;
        x = a * &x + b * &u;
        inputs.push(u);
    }
    inputs
}

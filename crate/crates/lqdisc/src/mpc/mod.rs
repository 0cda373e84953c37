//! Condensed-QP model predictive control with a linear Kalman filter, and the
//! closed-loop cement mill experiment built on top of the LQ discretization.

mod cement_mill;
mod condense;
mod kalman;
mod qp;
mod sim;
mod tf;

pub use cement_mill::{cement_mill_control_model, cement_mill_plant_model, cement_mill_scenario};
pub use condense::{condense, BoxBounds, CondensedQp, Condenser};
pub use kalman::{kalman_step, measurement_update, time_update, KalmanState};
pub use qp::{qp_solve, shift_solution, QpEngine, QpSolution};
pub use sim::{
    run_closed_loop, DisturbanceWindow, EventSettling, ReferenceEvent, RunSummary, ScenarioConfig,
    TrajectoryRecord,
};
pub use tf::{tf_realize, TransferFunction};

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::delay::{MimoDelaySystem, SisoDelayChannel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Build a system whose outputs carry additive filtered noise: each noise
/// model is realized and its states are appended to the first channel of the
/// named output row, with the realization input becoming a process-noise
/// column. Noise models must be strictly proper.
pub fn with_output_noise<T: Scalar>(
    mut channels: Vec<Vec<SisoDelayChannel<T>>>,
    noise: &[(usize, TransferFunction<T>)],
    sample_time: T,
) -> Result<MimoDelaySystem<T>> {
    let n_z = channels.len();
    // (output row, states of the noise block, noise input gain rows)
    let mut appended: Vec<(usize, usize, DVector<T>)> = Vec::new();
    for (out, tf) in noise {
        if *out >= n_z {
            return Err(Error::dim("noise output index", n_z - 1, *out));
        }
        let realized = tf_realize(tf)?;
        if realized.d != T::zero() {
            return Err(Error::ImproperTransferFunction);
        }
        let host = &mut channels[*out][0];
        let n0 = host.state_dim();
        let p = realized.state_dim();
        let mut a = DMatrix::zeros(n0 + p, n0 + p);
        a.view_mut((0, 0), (n0, n0)).copy_from(&host.a);
        a.view_mut((n0, n0), (p, p)).copy_from(&realized.a);
        let mut b = DVector::zeros(n0 + p);
        b.rows_mut(0, n0).copy_from(&host.b);
        let mut c = RowDVector::zeros(n0 + p);
        c.columns_mut(0, n0).copy_from(&host.c);
        c.columns_mut(n0, p).copy_from(&realized.c);
        *host = SisoDelayChannel::new(a, b, c, host.d, host.delay)?;
        appended.push((*out, p, realized.b));
    }

    let sys = MimoDelaySystem::new(channels, sample_time)?;
    let n_x = sys.state_dim();
    let mut g = DMatrix::<T>::zeros(n_x, appended.len());

    // Stacked state offsets, column-major over the grid.
    let offset_of = |out: usize| -> usize {
        let mut off = 0;
        for i in 0..out {
            off += sys.channel(i, 0).state_dim();
        }
        off
    };
    // Appended blocks sit at the end of their host channel; account for
    // multiple noise models sharing an output row.
    let mut consumed = vec![0usize; n_z];
    for (w, (out, p, b_noise)) in appended.iter().enumerate().rev() {
        let host_dim = sys.channel(*out, 0).state_dim();
        let start = offset_of(*out) + host_dim - consumed[*out] - p;
        for r in 0..*p {
            g[(start + r, w)] = b_noise[r];
        }
        consumed[*out] += p;
    }

    sys.with_noise_gain(g)
}

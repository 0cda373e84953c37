//! The simulated cement mill: transfer function models, the control model
//! with its integrating noise shaping, and the benchmark closed-loop scenario.
//!
//! Inputs are feed flow rate [TPH] and separator speed [%]; outputs are
//! elevator load [kW] and fineness [cm^2/g]; the disturbance is clinker
//! hardness [HGI]. Time is in minutes throughout.

use nalgebra::{DMatrix, DVector};

use crate::delay::MimoDelaySystem;
use crate::error::Result;
use crate::mpc::condense::BoxBounds;
use crate::mpc::sim::{DisturbanceWindow, ReferenceEvent, ScenarioConfig};
use crate::mpc::tf::{tf_realize, TransferFunction};
use crate::mpc::with_output_noise;

pub const SAMPLE_TIME_MIN: f64 = 2.0;

fn gu() -> [[TransferFunction<f64>; 2]; 2] {
    let tf = |num: f64, tau_den: f64, delay: f64| {
        TransferFunction::new(vec![num], vec![tau_den, 1.0], delay).unwrap()
    };
    [
        [tf(12.8, 16.7, 1.0), tf(-18.9, 21.0, 3.0)],
        [tf(6.6, 10.9, 7.0), tf(-19.4, 14.4, 3.0)],
    ]
}

fn gd() -> [TransferFunction<f64>; 2] {
    [
        // -1.0 e^{-3s} / ((32 s + 1)(21 s + 1))
        TransferFunction::new(vec![-1.0], vec![672.0, 53.0, 1.0], 3.0).unwrap(),
        // 60 / ((30 s + 1)(20 s + 1))
        TransferFunction::new(vec![60.0], vec![600.0, 50.0, 1.0], 0.0).unwrap(),
    ]
}

/// Integrating noise shaping per output: `1 / (s (10 s + 1))`.
fn noise_shaping() -> TransferFunction<f64> {
    TransferFunction::new(vec![1.0], vec![10.0, 1.0, 0.0], 0.0).unwrap()
}

/// Control model: the plant transfer matrix plus integrating output noise
/// states driven by white noise.
pub fn cement_mill_control_model() -> Result<MimoDelaySystem<f64>> {
    let gu = gu();
    let mut channels = Vec::with_capacity(2);
    for row in &gu {
        channels.push(vec![tf_realize(&row[0])?, tf_realize(&row[1])?]);
    }
    with_output_noise(
        channels,
        &[(0, noise_shaping()), (1, noise_shaping())],
        SAMPLE_TIME_MIN,
    )
}

/// Plant simulator model: inputs are the two controls plus the disturbance.
pub fn cement_mill_plant_model() -> Result<MimoDelaySystem<f64>> {
    let gu = gu();
    let gd = gd();
    let mut channels = Vec::with_capacity(2);
    for (row, d_tf) in gu.iter().zip(gd.iter()) {
        channels.push(vec![
            tf_realize(&row[0])?,
            tf_realize(&row[1])?,
            tf_realize(d_tf)?,
        ]);
    }
    MimoDelaySystem::new(channels, SAMPLE_TIME_MIN)
}

/// The benchmark closed-loop scenario: 12 h simulation, unit output weights,
/// 200 min horizon, box and rate input constraints, a sustained clinker
/// hardness disturbance on [3 h, 9 h) and a reference step at 6 h.
///
/// `disturbance_magnitude` scales the hardness disturbance; `noisy` toggles
/// the process and measurement noise.
pub fn cement_mill_scenario(
    disturbance_magnitude: f64,
    noisy: bool,
    seed: u64,
) -> Result<ScenarioConfig> {
    let (process_cov, meas_cov) = if noisy {
        (
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_partial_diagonal(2, 2, &[0.1, 50.0]),
        )
    } else {
        (DMatrix::zeros(1, 1), DMatrix::zeros(2, 2))
    };
    ScenarioConfig::new(
        cement_mill_control_model()?,
        cement_mill_plant_model()?,
        2,
        720.0,
        100,
        DMatrix::identity(2, 2),
        DVector::from_vec(vec![128.0, 60.0]),
        DVector::from_vec(vec![25.0, 3100.0]),
        BoxBounds::new(
            DVector::from_element(2, -20.0),
            DVector::from_element(2, 20.0),
            DVector::from_element(2, -2.0),
            DVector::from_element(2, 2.0),
        )?,
        vec![DisturbanceWindow {
            start: 180.0,
            stop: 540.0,
            value: DVector::from_element(1, disturbance_magnitude),
        }],
        vec![ReferenceEvent {
            time: 360.0,
            value: DVector::from_vec(vec![1.0, 50.0]),
        }],
        process_cov,
        meas_cov,
        DMatrix::identity(8, 8),
        seed,
    )
}

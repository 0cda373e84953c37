//! Closed-loop simulation: discretized plant, Kalman filter on the control
//! model, and the condensed-QP controller, all in deviation variables around
//! the operating point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::delay::MimoDelaySystem;
use crate::error::{Error, Result};
use crate::lq::{discretize, pad_covariance, ContinuousLqProblem, DiscretizeOptions};
use crate::mpc::condense::{BoxBounds, Condenser};
use crate::mpc::kalman::{measurement_update, time_update, KalmanState};
use crate::mpc::qp::{shift_solution, QpEngine, QpSolution};
use crate::solvers::Method;

/// Additive disturbance held on `[start, stop)`, in the plant's extra inputs.
#[derive(Debug, Clone)]
pub struct DisturbanceWindow {
    pub start: f64,
    pub stop: f64,
    pub value: DVector<f64>,
}

/// Output reference (as deviation from the steady state) applied from `time` on.
#[derive(Debug, Clone)]
pub struct ReferenceEvent {
    pub time: f64,
    pub value: DVector<f64>,
}

/// Complete closed-loop experiment description. Times are in the same unit
/// as the models' sample time.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub control_model: MimoDelaySystem<f64>,
    pub plant_model: MimoDelaySystem<f64>,
    /// Leading plant inputs driven by the controller; the rest take the disturbance.
    pub n_controls: usize,
    pub sim_time: f64,
    pub horizon: usize,
    pub weight: DMatrix<f64>,
    pub u_steady: DVector<f64>,
    pub z_steady: DVector<f64>,
    pub bounds: BoxBounds<f64>,
    pub disturbances: Vec<DisturbanceWindow>,
    pub reference_events: Vec<ReferenceEvent>,
    /// Discrete covariance of the noise added onto the disturbance inputs.
    pub process_noise_cov: DMatrix<f64>,
    pub meas_noise_cov: DMatrix<f64>,
    /// Initial filter covariance over the control model's continuous states.
    pub init_cov: DMatrix<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        control_model: MimoDelaySystem<f64>,
        plant_model: MimoDelaySystem<f64>,
        n_controls: usize,
        sim_time: f64,
        horizon: usize,
        weight: DMatrix<f64>,
        u_steady: DVector<f64>,
        z_steady: DVector<f64>,
        bounds: BoxBounds<f64>,
        disturbances: Vec<DisturbanceWindow>,
        reference_events: Vec<ReferenceEvent>,
        process_noise_cov: DMatrix<f64>,
        meas_noise_cov: DMatrix<f64>,
        init_cov: DMatrix<f64>,
        seed: u64,
    ) -> Result<Self> {
        let cfg = ScenarioConfig {
            control_model,
            plant_model,
            n_controls,
            sim_time,
            horizon,
            weight,
            u_steady,
            z_steady,
            bounds,
            disturbances,
            reference_events,
            process_noise_cov,
            meas_noise_cov,
            init_cov,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_disturbances(&self) -> usize {
        self.plant_model.n_inputs() - self.n_controls
    }

    fn validate(&self) -> Result<()> {
        if self.control_model.n_inputs() != self.n_controls {
            return Err(Error::dim(
                "control model inputs",
                self.n_controls,
                self.control_model.n_inputs(),
            ));
        }
        if self.plant_model.n_inputs() < self.n_controls {
            return Err(Error::dim(
                "plant inputs",
                format!(">= {}", self.n_controls),
                self.plant_model.n_inputs(),
            ));
        }
        if self.plant_model.n_outputs() != self.control_model.n_outputs() {
            return Err(Error::dim(
                "plant outputs",
                self.control_model.n_outputs(),
                self.plant_model.n_outputs(),
            ));
        }
        if self.control_model.sample_time() != self.plant_model.sample_time() {
            return Err(Error::dim(
                "plant sample time",
                self.control_model.sample_time(),
                self.plant_model.sample_time(),
            ));
        }
        let n_d = self.n_disturbances();
        for w in &self.disturbances {
            if w.start > w.stop || w.start < 0.0 || w.stop > self.sim_time {
                return Err(Error::FileFormat {
                    file: "scenario",
                    message: format!(
                        "disturbance window [{}, {}) outside the simulation",
                        w.start, w.stop
                    ),
                });
            }
            if w.value.len() != n_d {
                return Err(Error::dim("disturbance value", n_d, w.value.len()));
            }
        }
        for e in &self.reference_events {
            if e.time < 0.0 || e.time > self.sim_time {
                return Err(Error::FileFormat {
                    file: "scenario",
                    message: format!("reference event at {} outside the simulation", e.time),
                });
            }
            if e.value.len() != self.control_model.n_outputs() {
                return Err(Error::dim(
                    "reference value",
                    self.control_model.n_outputs(),
                    e.value.len(),
                ));
            }
        }
        if self.process_noise_cov.nrows() != n_d {
            return Err(Error::dim(
                "process noise covariance",
                n_d,
                self.process_noise_cov.nrows(),
            ));
        }
        if self.meas_noise_cov.nrows() != self.control_model.n_outputs() {
            return Err(Error::dim(
                "measurement noise covariance",
                self.control_model.n_outputs(),
                self.meas_noise_cov.nrows(),
            ));
        }
        Ok(())
    }

    fn reference_at(&self, t: f64) -> DVector<f64> {
        let mut value = DVector::zeros(self.control_model.n_outputs());
        for e in &self.reference_events {
            if e.time <= t {
                value = e.value.clone();
            }
        }
        value
    }

    fn disturbance_at(&self, t: f64) -> DVector<f64> {
        let mut value = DVector::zeros(self.n_disturbances());
        for w in &self.disturbances {
            if w.start <= t && t < w.stop {
                value += &w.value;
            }
        }
        value
    }
}

/// Recorded closed-loop trajectory in absolute units.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub time: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub z_ref: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
}

/// Settling bookkeeping for one scenario event.
#[derive(Debug, Clone)]
pub struct EventSettling {
    pub event_time: f64,
    /// Largest output deviation from the reference after the event.
    pub peak: f64,
    /// Time after the event at which the deviation drops below 1% of the
    /// peak and stays there until the next event; `None` if it never does.
    pub settled_within: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub peak_output_deviation: f64,
    pub max_constraint_violation: f64,
    pub settling: Vec<EventSettling>,
}

/// Square root factor of a positive semidefinite matrix for sampling.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.iter().all(|x| *x == 0.0) {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

fn sample(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let draws = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * draws
}

/// Run the scenario and return the trajectory and summary statistics.
pub fn run_closed_loop(scenario: &ScenarioConfig) -> Result<(TrajectoryRecord, RunSummary)> {
    let ts = scenario.control_model.sample_time();
    let steps = (scenario.sim_time / ts).round() as usize;
    let n_u = scenario.n_controls;
    let n_z = scenario.control_model.n_outputs();
    let horizon = scenario.horizon;

    // Control model discretization feeding the filter and the QP.
    let problem = ContinuousLqProblem {
        system: scenario.control_model.clone(),
        weight: scenario.weight.clone(),
        horizon,
        references: vec![DVector::zeros(n_z); horizon],
        initial_mean: DVector::zeros(scenario.control_model.state_dim()),
        initial_cov: scenario.init_cov.clone(),
    };
    let dp = discretize(&problem, &DiscretizeOptions::new(Method::MatrixExponential))?;
    let ctrl = &dp.system;
    let aug_dim = ctrl.state_dim();
    let r_ww_aug = pad_covariance(dp.r_ww.as_ref().expect("stochastic mode"), aug_dim);

    // Exact discrete plant with controls and disturbances as inputs.
    let plant_problem = ContinuousLqProblem {
        system: scenario.plant_model.clone(),
        weight: DMatrix::identity(n_z, n_z),
        horizon: 1,
        references: vec![DVector::zeros(n_z)],
        initial_mean: DVector::zeros(scenario.plant_model.state_dim()),
        initial_cov: DMatrix::zeros(
            scenario.plant_model.state_dim(),
            scenario.plant_model.state_dim(),
        ),
    };
    let plant = discretize(
        &plant_problem,
        &DiscretizeOptions::new(Method::MatrixExponential).deterministic(),
    )?
    .system;

    let condenser = Condenser::new(&ctrl.a, &ctrl.b, &dp.q, horizon, scenario.bounds.clone())?;
    let mut qp_engine = QpEngine::new(&condenser.h)?;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let w_factor = psd_sqrt(&scenario.process_noise_cov);
    let v_factor = psd_sqrt(&scenario.meas_noise_cov);

    let mut filter = KalmanState::new(DVector::zeros(aug_dim), pad_covariance(&scenario.init_cov, aug_dim));
    let mut x_plant = DVector::<f64>::zeros(plant.state_dim());
    let mut u_prev = DVector::<f64>::zeros(n_u);
    let mut plant_in_prev = DVector::<f64>::zeros(scenario.plant_model.n_inputs());
    let mut warm: Option<QpSolution<f64>> = None;

    let mut record = TrajectoryRecord {
        time: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        z_ref: Vec::with_capacity(steps),
        d: Vec::with_capacity(steps),
    };
    let mut deviations = Vec::with_capacity(steps);
    let mut max_violation = 0.0f64;

    for k in 0..steps {
        let t = k as f64 * ts;
        let z_ref_dev = scenario.reference_at(t);
        let d_now = scenario.disturbance_at(t);

        // Plant output and noisy measurement (feedthrough holds the previous
        // input across the sampling instant).
        let z_dev = &plant.c * &x_plant + &plant.d * &plant_in_prev;
        let v_k = sample(&mut rng, &v_factor);
        let y_dev = &z_dev + &v_k;

        // Filter measurement update, then the QP from the posterior estimate.
        let posterior = measurement_update(&filter, &u_prev, &y_dev, ctrl, &scenario.meas_noise_cov)
            .map_err(|e| Error::SimulationAborted {
                step: k,
                source: Box::new(e),
            })?;

        let q_step = &dp.m * &z_ref_dev;
        let q_lin = vec![q_step; horizon];
        let g = condenser
            .gradient(&posterior.x, &q_lin)
            .map_err(|e| Error::SimulationAborted {
                step: k,
                source: Box::new(e),
            })?;
        let sol = qp_engine
            .solve(&g, &scenario.bounds, n_u, horizon, &u_prev, warm.as_ref())
            .map_err(|e| Error::SimulationAborted {
                step: k,
                source: Box::new(e),
            })?;
        let u_dev = sol.u.rows(0, n_u).into_owned();
        // Shift the solution one step for the next warm start.
        warm = Some(shift_solution(&sol, &scenario.bounds, n_u, horizon));

        max_violation = max_violation.max(constraint_violation(
            &u_dev,
            &u_prev,
            &scenario.bounds,
        ));

        // Plant step with process noise entering through the disturbance inputs.
        let w_k = sample(&mut rng, &w_factor);
        let mut plant_in = DVector::zeros(scenario.plant_model.n_inputs());
        plant_in.rows_mut(0, n_u).copy_from(&u_dev);
        plant_in
            .rows_mut(n_u, scenario.n_disturbances())
            .copy_from(&(&d_now + w_k));
        x_plant = &plant.a * &x_plant + &plant.b * &plant_in;

        // Filter time update with the applied control.
        filter = time_update(&posterior, &u_dev, ctrl, &r_ww_aug);

        record.time.push(t);
        record.u.push(&scenario.u_steady + &u_dev);
        record.z.push(&scenario.z_steady + &z_dev);
        record.y.push(&scenario.z_steady + &y_dev);
        record.z_ref.push(&scenario.z_steady + &z_ref_dev);
        record.d.push(d_now);
        deviations.push((&z_dev - &z_ref_dev).amax());

        u_prev = u_dev;
        plant_in_prev = plant_in;
    }

    let settling = settling_per_event(scenario, &record.time, &deviations);
    let summary = RunSummary {
        steps,
        peak_output_deviation: deviations.iter().cloned().fold(0.0, f64::max),
        max_constraint_violation: max_violation,
        settling,
    };
    Ok((record, summary))
}

fn constraint_violation(
    u: &DVector<f64>,
    u_prev: &DVector<f64>,
    bounds: &BoxBounds<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..u.len() {
        worst = worst
            .max(u[c] - bounds.u_max[c])
            .max(bounds.u_min[c] - u[c]);
        let du = u[c] - u_prev[c];
        worst = worst.max(du - bounds.du_max[c]).max(bounds.du_min[c] - du);
    }
    worst.max(0.0)
}

/// Peak and settling time after each scenario event (disturbance edges and
/// reference steps), evaluated until the next event. An event counts as
/// settled once the deviation drops below 1% of the run's peak deviation and
/// stays there for the rest of its window.
fn settling_per_event(
    scenario: &ScenarioConfig,
    time: &[f64],
    deviations: &[f64],
) -> Vec<EventSettling> {
    let mut events: Vec<f64> = Vec::new();
    for w in &scenario.disturbances {
        events.push(w.start);
        events.push(w.stop);
    }
    for e in &scenario.reference_events {
        if e.time > 0.0 {
            events.push(e.time);
        }
    }
    events.retain(|t| *t < scenario.sim_time);
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.dedup();

    let run_peak = deviations.iter().cloned().fold(0.0, f64::max);
    let threshold = 0.01 * run_peak;

    let mut out = Vec::with_capacity(events.len());
    for (idx, &start) in events.iter().enumerate() {
        let stop = events.get(idx + 1).copied().unwrap_or(f64::INFINITY);
        let window: Vec<(f64, f64)> = time
            .iter()
            .zip(deviations)
            .filter(|(t, _)| **t >= start && **t < stop)
            .map(|(t, d)| (*t, *d))
            .collect();
        let peak = window.iter().map(|(_, d)| *d).fold(0.0, f64::max);
        let mut settled_at: Option<f64> = None;
        for &(t, d) in window.iter().rev() {
            if d > threshold {
                break;
            }
            settled_at = Some(t);
        }
        if peak == 0.0 {
            settled_at = Some(start);
        }
        out.push(EventSettling {
            event_time: start,
            peak,
            settled_within: settled_at.map(|t| t - start),
        });
    }
    out
}

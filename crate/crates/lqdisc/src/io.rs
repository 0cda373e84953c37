//! File formats: system definitions, problem descriptions, closed-loop
//! scenarios (versioned TOML schemas), full-precision result dumps and
//! trajectory CSV output. Field names are documented in the repository
//! README; all numbers are `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::delay::{MimoDelaySystem, SisoDelayChannel};
use crate::error::{Error, Result};
use crate::lq::{ContinuousLqProblem, DiscreteLqProblem};
use crate::mpc::{
    with_output_noise, BoxBounds, DisturbanceWindow, ReferenceEvent, ScenarioConfig,
    TrajectoryRecord, TransferFunction,
};

pub const SYSTEM_SCHEMA: &str = "lqdisc-system/1";
pub const PROBLEM_SCHEMA: &str = "lqdisc-problem/1";
pub const SCENARIO_SCHEMA: &str = "lqdisc-scenario/1";
pub const RESULT_SCHEMA: &str = "lqdisc-result/1";

fn bad(file: &'static str, message: impl ToString) -> Error {
    Error::FileFormat {
        file,
        message: message.to_string(),
    }
}

fn to_matrix(rows: &[Vec<f64>], file: &'static str, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(bad(file, format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// System files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SystemFile {
    schema: String,
    sample_time: f64,
    #[serde(default)]
    channel: Vec<ChannelEntry>,
    #[serde(default)]
    noise_channel: Vec<NoiseChannelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseEntry>,
}

/// One grid cell, either as a transfer function (`num`/`den`, descending
/// powers of `s`) or as state-space matrices. Indices are 1-based.
#[derive(Debug, Serialize, Deserialize)]
struct ChannelEntry {
    output: usize,
    input: usize,
    delay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    den: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
}

/// Filtered white noise added to one output: a strictly proper transfer
/// function whose input becomes a process-noise column.
#[derive(Debug, Serialize, Deserialize)]
struct NoiseChannelEntry {
    output: usize,
    num: Vec<f64>,
    den: Vec<f64>,
}

/// Raw process-noise gain on the stacked channel states.
#[derive(Debug, Serialize, Deserialize)]
struct NoiseEntry {
    g: Vec<Vec<f64>>,
}

impl ChannelEntry {
    fn realize(&self) -> Result<SisoDelayChannel<f64>> {
        match (&self.num, &self.den, &self.a) {
            (Some(num), Some(den), None) => {
                let tf = TransferFunction::new(num.clone(), den.clone(), self.delay)?;
                crate::mpc::tf_realize(&tf)
            }
            (None, None, Some(a)) => {
                let a = to_matrix(a, "system", "channel a")?;
                let b = DVector::from_vec(self.b.clone().unwrap_or_default());
                let c = RowDVector::from_vec(self.c.clone().unwrap_or_default());
                SisoDelayChannel::new(a, b, c, self.d.unwrap_or(0.0), self.delay)
            }
            _ => Err(bad(
                "system",
                format!(
                    "channel ({}, {}) must give either num/den or a/b/c",
                    self.output, self.input
                ),
            )),
        }
    }
}

pub fn load_system(path: &Path) -> Result<MimoDelaySystem<f64>> {
    let text = fs::read_to_string(path)?;
    let file: SystemFile = toml::from_str(&text).map_err(|e| bad("system", e))?;
    if file.schema != SYSTEM_SCHEMA {
        return Err(bad(
            "system",
            format!("unsupported schema {:?}, expected {SYSTEM_SCHEMA:?}", file.schema),
        ));
    }
    if file.channel.is_empty() {
        return Err(bad("system", "no channels"));
    }
    let n_z = file.channel.iter().map(|c| c.output).max().unwrap_or(0);
    let n_u = file.channel.iter().map(|c| c.input).max().unwrap_or(0);
    let mut grid: Vec<Vec<Option<SisoDelayChannel<f64>>>> = vec![(0..n_u).map(|_| None).collect(); n_z];
    for entry in &file.channel {
        if entry.output == 0 || entry.input == 0 {
            return Err(bad("system", "channel indices are 1-based"));
        }
        let slot = &mut grid[entry.output - 1][entry.input - 1];
        if slot.is_some() {
            return Err(bad(
                "system",
                format!("duplicate channel ({}, {})", entry.output, entry.input),
            ));
        }
        *slot = Some(entry.realize()?);
    }
    let mut channels = Vec::with_capacity(n_z);
    for (i, row) in grid.into_iter().enumerate() {
        let mut out_row = Vec::with_capacity(n_u);
        for (j, cell) in row.into_iter().enumerate() {
            out_row.push(cell.ok_or_else(|| {
                bad("system", format!("missing channel ({}, {})", i + 1, j + 1))
            })?);
        }
        channels.push(out_row);
    }

    if !file.noise_channel.is_empty() {
        if file.noise.is_some() {
            return Err(bad(
                "system",
                "give either noise_channel entries or a raw noise gain, not both",
            ));
        }
        let noise: Vec<(usize, TransferFunction<f64>)> = file
            .noise_channel
            .iter()
            .map(|n| {
                Ok((
                    n.output.checked_sub(1).ok_or_else(|| {
                        bad("system", "noise_channel output is 1-based")
                    })?,
                    TransferFunction::new(n.num.clone(), n.den.clone(), 0.0)?,
                ))
            })
            .collect::<Result<_>>()?;
        return with_output_noise(channels, &noise, file.sample_time);
    }

    let sys = MimoDelaySystem::new(channels, file.sample_time)?;
    match &file.noise {
        Some(noise) => sys.with_noise_gain(to_matrix(&noise.g, "system", "noise gain")?),
        None => Ok(sys),
    }
}

// ---------------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    schema: String,
    /// Path to the system file, relative to this file.
    system: String,
    q_c: Vec<Vec<f64>>,
    horizon: usize,
    /// Reference rows; a single row is held over the whole horizon.
    #[serde(default)]
    references: Vec<Vec<f64>>,
    #[serde(default)]
    x0: Vec<f64>,
    #[serde(default)]
    p0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stochastic: Option<bool>,
}

/// A problem plus the requested discretization mode.
#[derive(Debug)]
pub struct LoadedProblem {
    pub problem: ContinuousLqProblem<f64>,
    pub stochastic: bool,
}

fn sibling(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or_else(|| Path::new(".")).join(rel)
}

pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let text = fs::read_to_string(path)?;
    let file: ProblemFile = toml::from_str(&text).map_err(|e| bad("problem", e))?;
    if file.schema != PROBLEM_SCHEMA {
        return Err(bad(
            "problem",
            format!("unsupported schema {:?}, expected {PROBLEM_SCHEMA:?}", file.schema),
        ));
    }
    let system = load_system(&sibling(path, &file.system))?;
    let n_z = system.n_outputs();
    let n_x = system.state_dim();
    let weight = to_matrix(&file.q_c, "problem", "q_c")?;

    let references: Vec<DVector<f64>> = match file.references.len() {
        0 => vec![DVector::zeros(n_z); file.horizon],
        1 => vec![DVector::from_vec(file.references[0].clone()); file.horizon],
        n if n == file.horizon => file
            .references
            .iter()
            .map(|r| DVector::from_vec(r.clone()))
            .collect(),
        n => {
            return Err(bad(
                "problem",
                format!("{n} reference rows for a horizon of {}", file.horizon),
            ))
        }
    };

    let initial_mean = if file.x0.is_empty() {
        DVector::zeros(n_x)
    } else {
        DVector::from_vec(file.x0.clone())
    };
    let initial_cov = if file.p0.is_empty() {
        DMatrix::zeros(n_x, n_x)
    } else {
        to_matrix(&file.p0, "problem", "p0")?
    };
    let stochastic = file.stochastic.unwrap_or(system.noise_gain().is_some());

    Ok(LoadedProblem {
        problem: ContinuousLqProblem {
            system,
            weight,
            horizon: file.horizon,
            references,
            initial_mean,
            initial_cov,
        },
        stochastic,
    })
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    schema: String,
    control_model: String,
    plant_model: String,
    n_controls: usize,
    sim_time: f64,
    horizon: usize,
    q_c: Vec<Vec<f64>>,
    u_steady: Vec<f64>,
    z_steady: Vec<f64>,
    u_min: Vec<f64>,
    u_max: Vec<f64>,
    du_min: Vec<f64>,
    du_max: Vec<f64>,
    process_noise_cov: Vec<Vec<f64>>,
    meas_noise_cov: Vec<Vec<f64>>,
    #[serde(default)]
    init_cov: Vec<Vec<f64>>,
    seed: u64,
    #[serde(default)]
    disturbance: Vec<DisturbanceEntry>,
    #[serde(default)]
    reference: Vec<ReferenceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DisturbanceEntry {
    start: f64,
    stop: f64,
    value: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceEntry {
    time: f64,
    value: Vec<f64>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| bad("scenario", e))?;
    if file.schema != SCENARIO_SCHEMA {
        return Err(bad(
            "scenario",
            format!("unsupported schema {:?}, expected {SCENARIO_SCHEMA:?}", file.schema),
        ));
    }
    let control_model = load_system(&sibling(path, &file.control_model))?;
    let plant_model = load_system(&sibling(path, &file.plant_model))?;
    let init_cov = if file.init_cov.is_empty() {
        DMatrix::identity(control_model.state_dim(), control_model.state_dim())
    } else {
        to_matrix(&file.init_cov, "scenario", "init_cov")?
    };
    ScenarioConfig::new(
        control_model,
        plant_model,
        file.n_controls,
        file.sim_time,
        file.horizon,
        to_matrix(&file.q_c, "scenario", "q_c")?,
        DVector::from_vec(file.u_steady),
        DVector::from_vec(file.z_steady),
        BoxBounds::new(
            DVector::from_vec(file.u_min),
            DVector::from_vec(file.u_max),
            DVector::from_vec(file.du_min),
            DVector::from_vec(file.du_max),
        )?,
        file.disturbance
            .into_iter()
            .map(|d| DisturbanceWindow {
                start: d.start,
                stop: d.stop,
                value: DVector::from_vec(d.value),
            })
            .collect(),
        file.reference
            .into_iter()
            .map(|r| ReferenceEvent {
                time: r.time,
                value: DVector::from_vec(r.value),
            })
            .collect(),
        to_matrix(&file.process_noise_cov, "scenario", "process_noise_cov")?,
        to_matrix(&file.meas_noise_cov, "scenario", "meas_noise_cov")?,
        init_cov,
        file.seed,
    )
}

// ---------------------------------------------------------------------------
// Result dumps and CSV output
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema: String,
    pub method: String,
    pub n_steps: usize,
    pub wall_time_s: f64,
    pub rho_w: f64,
    pub a: Vec<Vec<f64>>,
    pub b_o: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub r_ww: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub a_tilde: Vec<Vec<f64>>,
    pub b_tilde: Vec<Vec<f64>>,
    pub c_tilde: Vec<Vec<f64>>,
    pub d_tilde: Vec<Vec<f64>>,
    pub q_lin: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_s: Option<Vec<f64>>,
}

impl ResultFile {
    pub fn from_problem(dp: &DiscreteLqProblem<f64>) -> Self {
        let d = &dp.discretization;
        ResultFile {
            schema: RESULT_SCHEMA.to_string(),
            method: d.method.label().to_string(),
            n_steps: d.n_steps,
            wall_time_s: d.wall_time.as_secs_f64(),
            rho_w: d.rho_w,
            a: matrix_rows(&d.a),
            b_o: matrix_rows(&d.b_o),
            q: matrix_rows(&d.q),
            m: matrix_rows(&d.m),
            r_ww: matrix_rows(&d.r_ww),
            gamma: matrix_rows(&d.gamma),
            a_tilde: matrix_rows(&dp.system.a),
            b_tilde: matrix_rows(&dp.system.b),
            c_tilde: matrix_rows(&dp.system.c),
            d_tilde: matrix_rows(&dp.system.d),
            q_lin: dp.q_lin.iter().map(|v| v.iter().cloned().collect()).collect(),
            rho: dp.rho.clone(),
            rho_s: dp.rho_s.clone(),
        }
    }
}

/// Write the discretized problem as TOML; floats use the shortest
/// round-trip representation, so the dump is bit-exact.
pub fn save_result(path: &Path, dp: &DiscreteLqProblem<f64>) -> Result<()> {
    let file = ResultFile::from_problem(dp);
    let text = toml::to_string(&file).map_err(|e| bad("result", e))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_result(path: &Path) -> Result<ResultFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| bad("result", e))
}

/// 17 significant digits: enough to reproduce any `f64` exactly.
pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trajectory CSV with one row per sampling instant:
/// `t, u..., z..., y..., z_ref..., d...`.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let mut out = String::new();
    let n_u = record.u.first().map(|v| v.len()).unwrap_or(0);
    let n_z = record.z.first().map(|v| v.len()).unwrap_or(0);
    let n_d = record.d.first().map(|v| v.len()).unwrap_or(0);
    out.push('t');
    for c in 1..=n_u {
        out.push_str(&format!(",u{c}"));
    }
    for c in 1..=n_z {
        out.push_str(&format!(",z{c}"));
    }
    for c in 1..=n_z {
        out.push_str(&format!(",y{c}"));
    }
    for c in 1..=n_z {
        out.push_str(&format!(",zref{c}"));
    }
    for c in 1..=n_d {
        out.push_str(&format!(",d{c}"));
    }
    out.push('\n');
    for k in 0..record.time.len() {
        out.push_str(&format_full(record.time[k]));
        for v in [&record.u[k], &record.z[k], &record.y[k], &record.z_ref[k], &record.d[k]] {
            for x in v.iter() {
                out.push(',');
                out.push_str(&format_full(*x));
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

//! Python bindings: `import boardball`.
//!
//! Structured results (schedules, trial rows, segments) come back as plain
//! dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use boardball_core::agents::{self, AgentPair, RunSettings};
use boardball_core::analysis::{self, peaks, segment};
use boardball_core::logs::BlockLog;
use boardball_core::protocol::build_schedule_with;
use boardball_core::{dynamics, report, sigproc, StylusInput};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializable value to Python objects through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Simulator coefficients. Keyword arguments override the defaults.
#[pyclass(module = "boardball", from_py_object)]
#[derive(Clone, Copy)]
struct SimParams {
    inner: boardball_core::SimParams,
}

#[pymethods]
impl SimParams {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(py: Python<'_>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut value = serde_json::to_value(boardball_core::SimParams::default()).map_err(err)?;
        if let Some(o) = overrides {
            let text: String = py.import("json")?.call_method1("dumps", (o,))?.extract()?;
            let patch: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).map_err(err)?;
            for (k, v) in patch {
                if value.get(&k).is_none() {
                    return Err(err(format!("unknown parameter `{k}`")));
                }
                value[k] = v;
            }
        }
        let inner: boardball_core::SimParams = serde_json::from_value(value).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: boardball_core::SimParams::load(&path).map_err(err)? })
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    /// Board height at rest with the styluses held at zero (m).
    fn static_equilibrium(&self) -> f64 {
        let p = &self.inner;
        -(p.board_mass + p.ball_mass) * p.gravity / (2.0 * p.hand_stiffness + p.center_stiffness)
    }

    fn __repr__(&self) -> String {
        format!("SimParams({:?})", self.inner)
    }
}

fn params_or_default(p: Option<SimParams>) -> boardball_core::SimParams {
    p.map(|p| p.inner).unwrap_or_default()
}

#[pyclass(module = "boardball", get_all, set_all, from_py_object)]
#[derive(Clone, Copy, Default)]
struct SimState {
    t: f64,
    z_board: f64,
    z_board_dot: f64,
    theta: f64,
    theta_dot: f64,
    p_ball: f64,
    p_ball_dot: f64,
}

#[pymethods]
impl SimState {
    #[new]
    #[pyo3(signature = (p_ball = 0.0, theta = 0.0, z_board = 0.0))]
    fn new(p_ball: f64, theta: f64, z_board: f64) -> Self {
        Self { p_ball, theta, z_board, ..Self::default() }
    }

    fn __repr__(&self) -> String {
        format!(
            "SimState(t={}, z_board={}, theta={}, p_ball={})",
            self.t, self.z_board, self.theta, self.p_ball
        )
    }
}

impl From<SimState> for dynamics::SimState {
    fn from(s: SimState) -> Self {
        Self {
            t: s.t,
            z_board: s.z_board,
            z_board_dot: s.z_board_dot,
            theta: s.theta,
            theta_dot: s.theta_dot,
            p_ball: s.p_ball,
            p_ball_dot: s.p_ball_dot,
        }
    }
}

impl From<dynamics::SimState> for SimState {
    fn from(s: dynamics::SimState) -> Self {
        Self {
            t: s.t,
            z_board: s.z_board,
            z_board_dot: s.z_board_dot,
            theta: s.theta,
            theta_dot: s.theta_dot,
            p_ball: s.p_ball,
            p_ball_dot: s.p_ball_dot,
        }
    }
}

/// One integration step. Returns the new state and `(f_left, f_right)`.
#[pyfunction]
#[pyo3(signature = (state, z_left, z_right, z_left_dot = 0.0, z_right_dot = 0.0, params = None))]
fn step(
    state: SimState,
    z_left: f64,
    z_right: f64,
    z_left_dot: f64,
    z_right_dot: f64,
    params: Option<SimParams>,
) -> PyResult<(SimState, (f64, f64))> {
    let input = StylusInput { z_left, z_left_dot, z_right, z_right_dot };
    let (next, f) = dynamics::step(&state.into(), &input, &params_or_default(params)).map_err(err)?;
    Ok((next.into(), (f.f_left, f.f_right)))
}

/// Drives the board with stylus height sequences (one sample per step).
/// Stylus velocities are backward differences. Returns a dict of lists.
#[pyfunction]
#[pyo3(signature = (z_left, z_right, params = None, state = None))]
fn simulate<'py>(
    py: Python<'py>,
    z_left: Vec<f64>,
    z_right: Vec<f64>,
    params: Option<SimParams>,
    state: Option<SimState>,
) -> PyResult<Bound<'py, PyDict>> {
    if z_left.len() != z_right.len() {
        return Err(err("z_left and z_right differ in length"));
    }
    let p = params_or_default(params);
    let mut s: dynamics::SimState = state.unwrap_or_default().into();
    let names = ["t", "z_board", "theta", "p_ball", "f_left", "f_right"];
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(z_left.len()); names.len()];
    let (mut prev_l, mut prev_r) = (z_left.first().copied().unwrap_or(0.0), z_right.first().copied().unwrap_or(0.0));
    for (&l, &r) in z_left.iter().zip(&z_right) {
        let input = StylusInput { z_left: l, z_left_dot: (l - prev_l) / p.dt, z_right: r, z_right_dot: (r - prev_r) / p.dt };
        (prev_l, prev_r) = (l, r);
        let (next, f) = dynamics::step(&s, &input, &p).map_err(err)?;
        s = next;
        for (c, v) in cols.iter_mut().zip([s.t, s.z_board, s.theta, s.p_ball, f.f_left, f.f_right]) {
            c.push(v);
        }
    }
    let out = PyDict::new(py);
    for (name, col) in names.iter().zip(cols) {
        out.set_item(name, col)?;
    }
    Ok(out)
}

/// The 18-block session schedule as a list of dicts.
#[pyfunction]
#[pyo3(signature = (counterbalance = false, trials_per_block = 60))]
fn schedule(py: Python<'_>, counterbalance: bool, trials_per_block: u32) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &build_schedule_with(counterbalance, trials_per_block).blocks)
}

/// Plays one scheduled block with the default agents. Writes the block log
/// into `out_dir` when given and returns `{"trials": [...], "log": path}`.
#[pyfunction]
#[pyo3(signature = (block_index, seed = 1, trials_per_block = 60, counterbalance = false, params = None, out_dir = None))]
fn simulate_block(
    py: Python<'_>,
    block_index: usize,
    seed: u64,
    trials_per_block: u32,
    counterbalance: bool,
    params: Option<SimParams>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'_, PyDict>> {
    let blocks = build_schedule_with(counterbalance, trials_per_block).blocks;
    let block = *blocks.get(block_index).ok_or_else(|| err(format!("block {block_index} out of range")))?;
    let p = params_or_default(params);
    let pair = AgentPair::default();
    let settings = RunSettings { seed, ..RunSettings::default() };
    let records = py
        .detach(|| agents::run_block(&pair.for_block(block.performer), block, &p, &settings))
        .map_err(err)?;
    let summaries: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "trial_index": r.config.trial_index,
                "target_side": r.config.target_side,
                "outcome": r.outcome,
                "completion_time": r.completion_time,
                "n_failures": r.n_failures,
                "n_frames": r.frames.len(),
            })
        })
        .collect();
    let out = PyDict::new(py);
    out.set_item("trials", to_py(py, &summaries)?)?;
    let log_path = match out_dir {
        Some(dir) => {
            let players = serde_json::json!({ "kind": "agents", "seed": seed });
            let log = BlockLog::new("py", block, p, players, records);
            let (jsonl, _) = log.persist(&dir).map_err(err)?;
            Some(jsonl.to_string_lossy().into_owned())
        }
        None => None,
    };
    out.set_item("log", log_path)?;
    Ok(out)
}

/// Per-trial metric rows and per-segment rows of one block log.
#[pyfunction]
fn analyze_log(py: Python<'_>, path: PathBuf) -> PyResult<(Bound<'_, PyAny>, Bound<'_, PyAny>)> {
    let (trials, segments) = py
        .detach(|| BlockLog::read(&path).and_then(|log| report::analyze_log(&log)))
        .map_err(err)?;
    Ok((to_py(py, &trials)?, to_py(py, &segments)?))
}

/// Zero-phase tenth-order Butterworth low-pass.
#[pyfunction]
fn lowpass(x: Vec<f64>, cutoff_hz: f64, sample_rate_hz: f64) -> PyResult<Vec<f64>> {
    sigproc::lowpass_zero_phase(&x, cutoff_hz, sample_rate_hz).map_err(err)
}

/// `"cooperative"`, `"competitive"`, `"single"` or `"still"`.
#[pyfunction]
fn classify_step(py: Python<'_>, v_left: f64, v_right: f64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::classify_step(v_left, v_right))
}

#[pyfunction]
fn count_speed_peaks(speed: Vec<f64>, sample_rate_hz: f64) -> PyResult<usize> {
    peaks::count_speed_peaks(&speed, sample_rate_hz).map_err(err)
}

/// Board movement segments of a raw angular velocity trace (rad/s).
#[pyfunction]
fn segment_board_movements(py: Python<'_>, theta_dot: Vec<f64>, sample_rate_hz: f64) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &segment::segment_board_movements(&theta_dot, sample_rate_hz).map_err(err)?)
}

/// Signed onset delay (right minus left, s) at a fraction of each side's
/// peak speed, or None when either side never reaches it.
#[pyfunction]
fn segment_delay(
    v_left: Vec<f64>,
    v_right: Vec<f64>,
    direction_left: f64,
    direction_right: f64,
    fraction: f64,
    sample_rate_hz: f64,
) -> Option<f64> {
    segment::segment_delay(&v_left, &v_right, direction_left, direction_right, fraction, sample_rate_hz)
        .map(|d| d.signed())
}

#[pyfunction]
fn pca2(py: Python<'_>, points: Vec<[f64; 2]>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::pca2(&points).map_err(err)?)
}

#[pyfunction]
fn strategy_ellipse(py: Python<'_>, points: Vec<[f64; 2]>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &analysis::strategy_ellipse(&points))
}

#[pymodule]
fn boardball(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SimParams>()?;
    m.add_class::<SimState>()?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_block, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_log, m)?)?;
    m.add_function(wrap_pyfunction!(lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(classify_step, m)?)?;
    m.add_function(wrap_pyfunction!(count_speed_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(segment_board_movements, m)?)?;
    m.add_function(wrap_pyfunction!(segment_delay, m)?)?;
    m.add_function(wrap_pyfunction!(pca2, m)?)?;
    m.add_function(wrap_pyfunction!(strategy_ellipse, m)?)?;
    m.add("DELAY_FRACTIONS", analysis::DELAY_FRACTIONS.to_vec())?;
    m.add("STILL_SPEED", analysis::STILL_SPEED)?;
    Ok(())
}

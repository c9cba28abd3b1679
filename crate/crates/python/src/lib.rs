//! Python bindings. Structured results come back as plain dicts and lists
//! built from the same JSON the logs and wire protocol use.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::Value;

use teleframe::frames::{build_frame, projected_camera_axis as solve_axis, ControlFrame, FrameKind, ImageVec};
use teleframe::geometry::{Direction, Mat3, Rotation, Vec3};
use teleframe::mapping::{map_input as map, DeviceInput};
use teleframe::metrics::{self, TrialOutcome};
use teleframe::operator::{default_operator, run_episode};
use teleframe::scene::Scene;
use teleframe::session::Session;
use teleframe::sim::{Simulation, TICK_HZ};
use teleframe::trial::TrialLog;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(err)?)
}

fn parse_kind(kind: &str) -> PyResult<FrameKind> {
    kind.parse().map_err(err)
}

#[pyclass(name = "Scene", module = "teleframe", from_py_object)]
#[derive(Clone)]
struct PyScene {
    inner: Scene,
}

#[pymethods]
impl PyScene {
    /// Pick-and-place scene; the camera heading and tilt are in degrees.
    #[staticmethod]
    #[pyo3(signature = (yaw_deg = 135.0, pitch_deg = -35.0))]
    fn pick_place(yaw_deg: f64, pitch_deg: f64) -> PyScene {
        PyScene { inner: Scene::pick_place_with_camera(yaw_deg.to_radians(), pitch_deg.to_radians()) }
    }

    #[staticmethod]
    fn tracing() -> PyScene {
        PyScene { inner: Scene::tracing_default() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyScene> {
        Ok(PyScene { inner: Scene::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn frame(&self) -> &'static str {
        self.inner.frame.name()
    }

    #[setter]
    fn set_frame(&mut self, kind: &str) -> PyResult<()> {
        self.inner.frame = parse_kind(kind)?;
        Ok(())
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario.name()
    }

    #[getter]
    fn device(&self) -> &'static str {
        self.inner.device.name()
    }

    fn __repr__(&self) -> String {
        format!("Scene(scenario={}, frame={}, device={})", self.scenario(), self.frame(), self.device())
    }
}

fn frame_for(scene: &Scene, kind: &str) -> PyResult<ControlFrame> {
    let kind = parse_kind(kind)?;
    let sim = Simulation::new(scene, scene.seed).map_err(err)?;
    let (eef, _) = sim.eef_world();
    build_frame(kind, scene, scene.device, Some(&eef)).map_err(err)
}

/// Frame columns (and wheel axis) in the robot base frame, for the arm at home.
#[pyfunction]
fn frame<'py>(py: Python<'py>, scene: &PyScene, kind: &str) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &frame_for(&scene.inner, kind)?)
}

/// Alignment diagnostics of a frame against the scene camera, in radians.
#[pyfunction]
fn diagnostics<'py>(py: Python<'py>, scene: &PyScene, kind: &str) -> PyResult<Bound<'py, PyAny>> {
    let f = frame_for(&scene.inner, kind)?;
    let plane = scene.inner.whiteboard.as_ref().map(|b| b.plane());
    serialize(py, &metrics::frame_diagnostics(&f, &scene.inner, plane.as_ref()).map_err(err)?)
}

/// World direction on the plane with normal `plane_normal` whose image under
/// camera rotation `camera` (row-major 3×3) is along `image_vector`.
#[pyfunction]
fn projected_camera_axis(image_vector: (f64, f64), camera: [[f64; 3]; 3], plane_normal: [f64; 3]) -> PyResult<[f64; 3]> {
    let rows: Vec<f64> = camera.iter().flatten().copied().collect();
    let r_c = Rotation::new(Mat3::from_row_slice(&rows)).map_err(err)?;
    let n = Direction::normalize(Vec3::from(plane_normal)).map_err(err)?;
    let v = solve_axis(ImageVec::new(image_vector.0, image_vector.1), &r_c, n).map_err(err)?;
    Ok([v.x, v.y, v.z])
}

/// Maps one device sample through a frame; returns (linear, angular) twist.
#[pyfunction]
#[pyo3(signature = (scene, kind, translation, dt, wheel = None, clutched = false))]
fn map_input(
    scene: &PyScene,
    kind: &str,
    translation: Vec<f64>,
    dt: f64,
    wheel: Option<f64>,
    clutched: bool,
) -> PyResult<([f64; 3], [f64; 3])> {
    let f = frame_for(&scene.inner, kind)?;
    let mut input = DeviceInput::translation(&translation, dt);
    input.wheel = wheel;
    input.clutched = clutched;
    let t = map(&f, &input, &scene.inner.mapping).map_err(err)?;
    Ok(([t.linear.x, t.linear.y, t.linear.z], [t.angular.x, t.angular.y, t.angular.z]))
}

/// Accuracy, incompleteness and total error of a pen trace against a target
/// polyline, both in board coordinates.
#[pyfunction]
#[pyo3(signature = (pen, target, d_max = None))]
fn trajectory_error<'py>(py: Python<'py>, pen: Vec<[f64; 2]>, target: Vec<[f64; 2]>, d_max: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let e = match d_max {
        Some(d) => metrics::trajectory_error(&pen, &target, d),
        None => metrics::trajectory_error_default(&pen, &target),
    }
    .map_err(err)?;
    serialize(py, &e)
}

/// Trials as (participant, condition, time_s, error) tuples; returns one
/// row dict per trial with raw and participant-relative combined values.
#[pyfunction]
fn combined_objective<'py>(py: Python<'py>, trials: Vec<(String, String, f64, f64)>) -> PyResult<Bound<'py, PyAny>> {
    let trials: Vec<TrialOutcome> = trials
        .into_iter()
        .map(|(participant, condition, time_s, error)| TrialOutcome { participant, condition, time_s, error })
        .collect();
    serialize(py, &metrics::combined_objective(&trials).map_err(err)?)
}

#[pyclass(name = "TrialLog", module = "teleframe", from_py_object)]
#[derive(Clone)]
struct PyTrialLog {
    inner: TrialLog,
}

#[pymethods]
impl PyTrialLog {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<PyTrialLog> {
        Ok(PyTrialLog { inner: TrialLog::from_jsonl(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<PyTrialLog> {
        Ok(PyTrialLog { inner: TrialLog::load(&path).map_err(err)? })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[getter]
    fn ticks(&self) -> usize {
        self.inner.ticks.len()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.header.seed
    }

    /// The stored metrics line, if the log has one.
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.metrics)
    }

    fn recompute_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.recompute_metrics())
    }

    /// Fingertip positions in the world frame, one per tick.
    fn fingertip_path(&self) -> Vec<[f64; 3]> {
        self.inner.ticks.iter().map(|t| [t.fingertip.x, t.fingertip.y, t.fingertip.z]).collect()
    }
}

/// Runs one synthetic-operator episode. `operator` is the believed frame
/// kind, or "aligned" for the frame the robot uses.
#[pyfunction]
#[pyo3(signature = (scene, frame = None, operator = "aligned", seed = 0, noise_std = 0.0))]
fn simulate(scene: &PyScene, frame: Option<&str>, operator: &str, seed: u64, noise_std: f64) -> PyResult<PyTrialLog> {
    let mut s = scene.inner.clone();
    if let Some(k) = frame {
        s.frame = parse_kind(k)?;
    }
    let belief = if operator == "aligned" { s.frame } else { parse_kind(operator)? };
    let mut model = default_operator(&s, belief).map_err(err)?;
    model.noise_std = noise_std;
    let max_ticks = (teleframe::scenarios::TIME_LIMIT * TICK_HZ as f64) as u64 + 1;
    let log = run_episode(&s, s.frame, &model, seed, max_ticks).map_err(err)?;
    Ok(PyTrialLog { inner: log })
}

/// The live-session state machine on a caller-supplied clock. Every call
/// returns (messages to send, log lines to append) as JSON strings.
#[pyclass(name = "Session", module = "teleframe")]
struct PySession {
    inner: Session,
}

type Outgoing = (Vec<String>, Vec<String>);

fn outgoing(out: teleframe::session::Output) -> Outgoing {
    (out.messages.iter().map(|m| m.to_json()).collect(), out.log_lines)
}

#[pymethods]
impl PySession {
    #[new]
    fn new(id: String, scene: &PyScene) -> PySession {
        PySession { inner: Session::new(id, scene.inner.clone()) }
    }

    fn handle(&mut self, text: &str, now_ms: u64) -> Outgoing {
        outgoing(self.inner.handle_text(text, now_ms))
    }

    fn poll(&mut self, now_ms: u64) -> Outgoing {
        outgoing(self.inner.poll_qualification(now_ms))
    }

    fn tick(&mut self) -> Outgoing {
        outgoing(self.inner.tick())
    }

    #[getter]
    fn phase(&self) -> String {
        serde_json::to_value(self.inner.phase).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

#[pymodule]
#[pyo3(name = "teleframe")]
fn teleframe_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyTrialLog>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(frame, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(projected_camera_axis, m)?)?;
    m.add_function(wrap_pyfunction!(map_input, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_error, m)?)?;
    m.add_function(wrap_pyfunction!(combined_objective, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("FRAME_KINDS", FrameKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    Ok(())
}

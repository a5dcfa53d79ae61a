//! Python bindings. Structured results cross the boundary as JSON-compatible
//! dicts and lists.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flipper_core::exec;
use flipper_core::genz::{self, EmbeddingTable};
use flipper_core::lang;
use flipper_core::planner;
use flipper_core::session::{self, Engine as CoreEngine, EngineError};
use flipper_core::store::{RuleFilter, Store};
use flipper_core::world::{GridWorld, Point};

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn from_py<T: for<'de> serde::Deserialize<'de>>(py: Python<'_>, v: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = if let Ok(s) = v.extract::<String>() {
        s
    } else {
        py.import("json")?.call_method1("dumps", (v,))?.extract()?
    };
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn engine_err(e: EngineError) -> PyErr {
    match e.status() {
        404 => PyKeyError::new_err(e.to_string()),
        422 | 403 | 409 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A grid world. Construct from a JSON string or dict in the world-file format.
#[pyclass(module = "flipper", name = "World", skip_from_py_object)]
#[derive(Clone)]
struct PyWorld(GridWorld);

#[pymethods]
impl PyWorld {
    #[new]
    fn new(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyWorld(from_py(py, spec)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        GridWorld::load(&path).map(PyWorld).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0)
    }

    #[getter]
    fn robot(&self) -> (i64, i64) {
        (self.0.robot.position.x, self.0.robot.position.y)
    }

    #[getter]
    fn holding(&self) -> Vec<String> {
        self.0.robot.holding.iter().cloned().collect()
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    /// Runs a program leniently (or under `strict { … }` if the text says so); returns
    /// `(trace dict, resulting World)`.
    fn execute(&self, py: Python<'_>, program: &str) -> PyResult<(Py<PyAny>, PyWorld)> {
        let p = lang::parse_core_with_areas(program, self.0.named_areas.keys().map(String::as_str))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let out = exec::execute(&p, &self.0);
        Ok((to_py(py, &out.trace)?, PyWorld(out.world)))
    }

    /// Shortest path from the robot to any of `targets`, as a list of directions.
    fn path_to(&self, targets: Vec<(i64, i64)>) -> PyResult<Vec<String>> {
        let q = planner::PathQuery::to(self.0.robot.position, targets.into_iter().map(|(x, y)| Point::new(x, y)).collect());
        planner::shortest_path(&q, &self.0)
            .map(|p| p.moves.iter().map(|d| d.as_str().to_string()).collect())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "World({}x{}, {} items, robot at {:?})",
            self.0.width,
            self.0.height,
            self.0.items.len(),
            self.robot()
        )
    }
}

/// Parses core-language text and returns its canonical form.
#[pyfunction]
fn canonical(text: &str) -> PyResult<String> {
    lang::parse_core(text)
        .map(|p| lang::pretty(&p))
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Embedding similarity between a definition and an utterance (bundled vectors).
#[pyfunction]
fn similarity(definition: &str, utterance: &str) -> f64 {
    genz::sim(definition, utterance, Some(EmbeddingTable::bundled()))
}

/// Sessions, grammar growth and persistence.
#[pyclass(module = "flipper", name = "Engine")]
struct PyEngine(Mutex<CoreEngine>);

impl PyEngine {
    fn lock(&self) -> std::sync::MutexGuard<'_, CoreEngine> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[pymethods]
impl PyEngine {
    #[new]
    #[pyo3(signature = (data_dir=None, embeddings=None))]
    fn new(data_dir: Option<PathBuf>, embeddings: Option<PathBuf>) -> PyResult<Self> {
        let store = match data_dir {
            Some(d) => Store::open(d).map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
            None => Store::in_memory(),
        };
        let table = match embeddings {
            Some(p) => EmbeddingTable::load(&p, None).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => EmbeddingTable::bundled().clone(),
        };
        Ok(PyEngine(Mutex::new(CoreEngine::new(store, Some(Arc::new(table))))))
    }

    fn add_world(&self, name: &str, world: &PyWorld) -> PyResult<()> {
        self.lock()
            .store_mut()
            .import_world(name, &world.0)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn open_session(&self, user: &str, world_id: &str) -> PyResult<String> {
        self.lock().open_session(user, world_id).map(|r| r.0).map_err(engine_err)
    }

    fn world(&self, session: &str) -> PyResult<PyWorld> {
        self.lock().session(session).map(|s| PyWorld(s.world.clone())).map_err(engine_err)
    }

    /// `{"status": "ok", "candidates": [...]}` or `{"status": "unparsable", "error": {...}}`.
    fn utterance(&self, py: Python<'_>, session: &str, text: &str) -> PyResult<Py<PyAny>> {
        let r = self.lock().utterance(session, text).map_err(engine_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (session, candidate, idempotency_key=None))]
    fn choose(&self, py: Python<'_>, session: &str, candidate: usize, idempotency_key: Option<&str>) -> PyResult<Py<PyAny>> {
        let r = self.lock().choose(session, candidate, idempotency_key).map_err(engine_err)?;
        to_py(py, &r)
    }

    fn define(&self, py: Python<'_>, session: &str, utterance: &str, definition: &str) -> PyResult<Py<PyAny>> {
        let r: session::DefineResult = self.lock().define(session, utterance, definition).map_err(engine_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (author=None, include_core=false))]
    fn rules(&self, author: Option<String>, include_core: bool) -> Vec<String> {
        self.lock()
            .list_rules(&RuleFilter { author, include_core })
            .iter()
            .map(|r| format!("{} {}", r.id, r))
            .collect()
    }

    fn delete_rule(&self, rule_id: &str, user: &str) -> PyResult<()> {
        self.lock().delete_rule(rule_id, user).map_err(engine_err)
    }
}

#[pymodule]
pub fn flipper(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(canonical, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    Ok(())
}

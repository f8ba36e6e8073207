//! Python bindings. Structured values cross the boundary as JSON strings.

use std::path::{Path, PathBuf};

use advocate_core::analyze::{aggregate as aggregate_stats, format_csv, format_table, load_sessions, transcript_metrics as metrics, SessionData};
use advocate_core::config::ServiceConfig;
use advocate_core::domain::{self, ParticipantId, TaskSpec, WireFrame};
use advocate_core::llm::mock_embedding;
use advocate_core::pipeline::{cosine_similarity, EmbeddingVector};
use advocate_core::session;
use advocate_core::sim::{simulate_script, Script};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Cosine similarity of two equal-length, non-zero vectors.
#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = EmbeddingVector::new(a).map_err(value_err)?;
    let b = EmbeddingVector::new(b).map_err(value_err)?;
    cosine_similarity(&a, &b).map_err(value_err)
}

/// Deterministic hashed bag-of-tokens embedding used by the mock provider.
#[pyfunction]
fn embed(text: &str) -> Vec<f64> {
    mock_embedding(text).values().to_vec()
}

#[pyfunction]
fn encode_frame<'py>(py: Python<'py>, frame_json: &str) -> PyResult<Bound<'py, PyBytes>> {
    let frame: WireFrame = serde_json::from_str(frame_json).map_err(value_err)?;
    let bytes = domain::encode_frame(&frame).map_err(value_err)?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn decode_frame(data: &[u8]) -> PyResult<String> {
    let frame = domain::decode_frame(data).map_err(value_err)?;
    serde_json::to_string(&frame).map_err(value_err)
}

/// Validates a task definition and returns it re-serialized.
#[pyfunction]
fn validate_task(task_json: &str) -> PyResult<String> {
    let spec: TaskSpec = serde_json::from_str(task_json).map_err(value_err)?;
    let spec = domain::validate_task(spec).map_err(value_err)?;
    serde_json::to_string(&spec).map_err(value_err)
}

/// Maps each participant id to "Senior" or "Junior".
#[pyfunction]
fn assign_roles(participants: Vec<String>, seed: u64) -> PyResult<Vec<(String, String)>> {
    let ids: Vec<ParticipantId> = participants.into_iter().map(ParticipantId::new).collect();
    let roles = session::assign_roles(&ids, seed).map_err(value_err)?;
    Ok(roles
        .into_iter()
        .map(|(id, role)| (id.to_string(), format!("{:?}", role.kind())))
        .collect())
}

/// Runs a scripted session and returns the session directory. Without a
/// script the bundled reference flow is used.
#[pyfunction]
#[pyo3(signature = (out, seed=0, script=None, config=None))]
fn simulate(py: Python<'_>, out: PathBuf, seed: u64, script: Option<PathBuf>, config: Option<PathBuf>) -> PyResult<String> {
    let script = match script {
        Some(p) => Script::load(&p).map_err(value_err)?,
        None => Script::reference(),
    };
    let cfg = match config {
        Some(p) => ServiceConfig::load(&p).map_err(value_err)?,
        None => ServiceConfig::default(),
    };
    let outcome = py
        .detach(|| simulate_script(&script, &cfg, seed, &out))
        .map_err(value_err)?;
    Ok(outcome.session_dir.display().to_string())
}

/// Descriptive statistics over session directories, as "csv" or "table".
#[pyfunction]
#[pyo3(signature = (dirs, format="csv"))]
fn aggregate(dirs: Vec<PathBuf>, format: &str) -> PyResult<String> {
    let sessions = load_sessions(&dirs).map_err(value_err)?;
    let stats = aggregate_stats(&sessions).map_err(value_err)?;
    match format {
        "csv" => Ok(format_csv(&stats)),
        "table" => Ok(format_table(&stats)),
        other => Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    }
}

/// Per-room transcript metrics of one session, as JSON.
#[pyfunction]
fn transcript_metrics(dir: &str) -> PyResult<String> {
    let data = SessionData::load(Path::new(dir)).map_err(value_err)?;
    let report = metrics(&data).map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn advocate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(validate_task, m)?)?;
    m.add_function(wrap_pyfunction!(assign_roles, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(transcript_metrics, m)?)?;
    m.add("PROTOCOL_VERSION", domain::PROTOCOL_VERSION)?;
    Ok(())
}

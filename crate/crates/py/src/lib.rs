//! Python bindings for the tapkit analysis pipeline. Thin wrappers around
//! the core types; all heavy lifting stays in tapkit-core.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tapkit_core::features::{FeatureReport, FEATURE_NAMES};
use tapkit_core::ingest::{self, TrajectoryFormat, TrajectorySet};
use tapkit_core::stats::{self, KeypointPredictionSet, PairedFeatureSample};
use tapkit_core::synth::{self, SynthSpec};
use tapkit_core::vertex::{AvrParams, VertexKind};

fn err(e: tapkit_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One recording's 2D keypoint tracks.
#[pyclass(name = "Trajectory")]
#[derive(Clone)]
struct PyTrajectory {
    inner: TrajectorySet,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn from_csv(content: &str) -> PyResult<Self> {
        Ok(Self { inner: ingest::parse_trajectory(content, TrajectoryFormat::Csv).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(content: &str) -> PyResult<Self> {
        Ok(Self { inner: ingest::parse_trajectory(content, TrajectoryFormat::Json).map_err(err)? })
    }

    fn to_csv(&self) -> String {
        ingest::serialize_trajectory_csv(&self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        ingest::serialize_trajectory_json(&self.inner).map_err(err)
    }

    #[getter]
    fn recording_id(&self) -> &str {
        &self.inner.recording_id
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    #[getter]
    fn duration_frames(&self) -> usize {
        self.inner.duration_frames
    }

    #[getter]
    fn keypoint_ids(&self) -> Vec<String> {
        self.inner.keypoints.iter().map(|k| k.keypoint_id.clone()).collect()
    }

    /// Samples of one keypoint as [(x, y) | None] per frame.
    fn track(&self, keypoint_id: &str) -> PyResult<Vec<Option<(f64, f64)>>> {
        let t = self.inner.track(keypoint_id).map_err(err)?;
        Ok(t
            .samples
            .iter()
            .zip(&t.missing_mask)
            .map(|(&p, &m)| if m { None } else { Some(p) })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(recording_id={:?}, fps={}, frames={}, keypoints={})",
            self.inner.recording_id,
            self.inner.fps,
            self.inner.duration_frames,
            self.inner.keypoints.len()
        )
    }
}

/// The nine kinematic features of one recording.
#[pyclass(name = "Features")]
#[derive(Clone)]
struct PyFeatures {
    inner: FeatureReport,
}

#[pymethods]
impl PyFeatures {
    /// Feature value by its canonical name (e.g. "M-TF").
    fn get(&self, name: &str) -> PyResult<f64> {
        self.inner
            .get(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown feature {name:?}")))
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for name in FEATURE_NAMES {
            d.set_item(name, self.inner.get(name).unwrap())?;
        }
        Ok(d)
    }

    #[getter]
    fn iti_mismatch(&self) -> bool {
        self.inner.iti_mismatch
    }

    fn __repr__(&self) -> String {
        let pairs: Vec<String> = FEATURE_NAMES
            .iter()
            .map(|n| format!("{n}={:.4}", self.inner.get(n).unwrap()))
            .collect();
        format!("Features({})", pairs.join(", "))
    }
}

/// Result of running the full pipeline on one recording.
#[pyclass(name = "Analysis")]
struct PyAnalysis {
    inner: tapkit_core::AnalysisResult,
}

#[pymethods]
impl PyAnalysis {
    #[getter]
    fn recording_id(&self) -> &str {
        &self.inner.recording_id
    }

    #[getter]
    fn features(&self) -> PyFeatures {
        PyFeatures { inner: self.inner.features.clone() }
    }

    /// Mean-removed (and optionally normalized) distance signal per frame.
    #[getter]
    fn signal(&self) -> Vec<f64> {
        self.inner.signal.values.clone()
    }

    /// Recognized vertices as (time, frame, height, kind) with kind
    /// "peak" or "trough", in time order.
    #[getter]
    fn vertices(&self) -> Vec<(f64, usize, f64, &'static str)> {
        self.inner
            .avr
            .vertices
            .vertices
            .iter()
            .map(|v| {
                let kind = match v.kind {
                    VertexKind::Peak => "peak",
                    VertexKind::Trough => "trough",
                };
                (v.time, v.frame, v.height, kind)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Analysis(recording_id={:?}, vertices={}, M-TF={:.4})",
            self.inner.recording_id,
            self.inner.avr.vertices.vertices.len(),
            self.inner.features.m_tf
        )
    }
}

fn params_from(
    gamma_flatness: Option<f64>,
    gamma_window: Option<f64>,
    gamma_platform: Option<f64>,
) -> PyResult<AvrParams> {
    let mut p = AvrParams::default();
    if let Some(v) = gamma_flatness {
        p.gamma_flatness = v;
    }
    if let Some(v) = gamma_window {
        p.gamma_window = v;
    }
    if let Some(v) = gamma_platform {
        p.gamma_platform = v;
    }
    p.validate().map_err(err)?;
    Ok(p)
}

/// Run the full pipeline: distance signal, vertex recognition, features.
/// Keypoints default to the recording's pair when it has exactly two.
#[pyfunction]
#[pyo3(signature = (trajectory, keypoint_a=None, keypoint_b=None, normalize=true,
                    gamma_flatness=None, gamma_window=None, gamma_platform=None))]
fn analyze(
    trajectory: &PyTrajectory,
    keypoint_a: Option<&str>,
    keypoint_b: Option<&str>,
    normalize: bool,
    gamma_flatness: Option<f64>,
    gamma_window: Option<f64>,
    gamma_platform: Option<f64>,
) -> PyResult<PyAnalysis> {
    let params = params_from(gamma_flatness, gamma_window, gamma_platform)?;
    let (a, b) = match (keypoint_a, keypoint_b) {
        (Some(a), Some(b)) => (a.to_string(), b.to_string()),
        (None, None) if trajectory.inner.keypoints.len() == 2 => (
            trajectory.inner.keypoints[0].keypoint_id.clone(),
            trajectory.inner.keypoints[1].keypoint_id.clone(),
        ),
        _ => {
            return Err(PyValueError::new_err(
                "specify both keypoint_a and keypoint_b unless the recording has exactly two keypoints",
            ))
        }
    };
    let inner = tapkit_core::analyze_trajectory(&trajectory.inner, &a, &b, &params, normalize)
        .map_err(err)?;
    Ok(PyAnalysis { inner })
}

/// Generate a synthetic tapping recording from a JSON generator spec.
/// Returns (trajectory, ground_truth_dict).
#[pyfunction]
fn synthesize(py: Python<'_>, spec_json: &str) -> PyResult<(PyTrajectory, Py<PyDict>)> {
    let spec: SynthSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (traj, truth) = synth::generate(&spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("peak_times", truth.true_peak_times)?;
    d.set_item("valley_times", truth.true_valley_times)?;
    d.set_item("amplitudes", truth.true_amplitudes)?;
    d.set_item(
        "features",
        truth.true_features.map(|f| PyFeatures { inner: f }.into_pyobject(py)).transpose()?,
    )?;
    Ok((PyTrajectory { inner: traj }, d.into()))
}

/// Welch's unequal-variance t-test, two tailed.
/// Returns {"t", "df", "p", "accept"} where accept means p > 0.05.
#[pyfunction]
fn welch_t_test(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Py<PyDict>> {
    let r = stats::welch_t_test(&a, &b).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("df", r.df)?;
    d.set_item("p", r.p)?;
    d.set_item("accept", r.decision == stats::Decision::Accept)?;
    Ok(d.into())
}

fn sample_from(a: &[f64], b: &[f64]) -> PyResult<PairedFeatureSample> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("paired samples must have equal length"));
    }
    Ok(PairedFeatureSample {
        pairs: a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (&x, &y))| (x, y, format!("pair-{i}")))
            .collect(),
        feature_name: String::new(),
        condition_label: String::new(),
    })
}

/// Bland-Altman agreement between two paired measurement series.
/// Returns {"bias", "loa_low", "loa_high"}.
#[pyfunction]
fn bland_altman(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Py<PyDict>> {
    let r = stats::bland_altman(&sample_from(&a, &b)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("bias", r.bias)?;
    d.set_item("loa_low", r.loa_low)?;
    d.set_item("loa_high", r.loa_high)?;
    Ok(d.into())
}

/// Fraction of pairs whose absolute difference is within `threshold`.
#[pyfunction]
fn agreement_fraction(a: Vec<f64>, b: Vec<f64>, threshold: f64) -> PyResult<f64> {
    stats::agreement_fraction(&sample_from(&a, &b)?, threshold).map_err(err)
}

/// Fraction of predicted keypoints strictly within `threshold` pixels of
/// the truth. Both arguments are [keypoint][frame] lists of (x, y).
#[pyfunction]
fn pck(
    predicted: Vec<Vec<(f64, f64)>>,
    truth: Vec<Vec<(f64, f64)>>,
    threshold: f64,
) -> PyResult<f64> {
    let set = KeypointPredictionSet::new(predicted, truth).map_err(err)?;
    stats::pck(&set, threshold).map_err(err)
}

/// Mean Euclidean keypoint error in pixels.
#[pyfunction]
fn mpjpe(predicted: Vec<Vec<(f64, f64)>>, truth: Vec<Vec<(f64, f64)>>) -> PyResult<f64> {
    let set = KeypointPredictionSet::new(predicted, truth).map_err(err)?;
    Ok(stats::mpjpe(&set))
}

/// Canonical feature names in report order.
#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

#[pymodule]
fn tapkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(bland_altman, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(pck, m)?)?;
    m.add_function(wrap_pyfunction!(mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    Ok(())
}

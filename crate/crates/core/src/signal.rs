//! Distance-versus-time signal construction: Euclidean aperture between two
//! keypoints, optional normalization to maximum aperture, and mean removal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrajectorySet;

/// Scalar inter-keypoint distance series with its processing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSignal {
    pub values: Vec<f64>,
    pub fps: f64,
    pub mean_removed: bool,
    pub normalized: bool,
    /// max(values) - min(values), kept in sync with `values`.
    pub range_r: f64,
}

fn range_of(values: &[f64]) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    max - min
}

impl DistanceSignal {
    fn new(values: Vec<f64>, fps: f64, mean_removed: bool, normalized: bool) -> Self {
        let range_r = range_of(&values);
        DistanceSignal { values, fps, mean_removed, normalized, range_r }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Per-frame Euclidean distance between keypoints `a` and `b`.
pub fn distance_signal(traj: &TrajectorySet, a: &str, b: &str) -> Result<DistanceSignal> {
    let ta = traj.track(a)?;
    let tb = traj.track(b)?;
    let values = ta
        .samples
        .iter()
        .zip(&tb.samples)
        .map(|(&(ax, ay), &(bx, by))| ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt())
        .collect();
    Ok(DistanceSignal::new(values, traj.fps, false, false))
}

/// Subtracts the time-averaged mean. Applying twice is rejected.
pub fn mean_remove(s: &DistanceSignal) -> Result<DistanceSignal> {
    if s.mean_removed {
        return Err(Error::AlreadyMeanRemoved);
    }
    let mean = s.mean();
    let values = s.values.iter().map(|v| v - mean).collect();
    Ok(DistanceSignal::new(values, s.fps, true, s.normalized))
}

/// Scales the signal so the maximum raw distance maps to 1.0.
pub fn normalize_max_aperture(s: &DistanceSignal) -> Result<DistanceSignal> {
    if s.range_r <= 0.0 {
        return Err(Error::FlatRecording);
    }
    let max = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let values = s.values.iter().map(|v| v / max).collect();
    Ok(DistanceSignal::new(values, s.fps, s.mean_removed, true))
}

/// Standard preprocessing chain: distance, optional max-aperture
/// normalization, then mean removal.
pub fn prepare_signal(traj: &TrajectorySet, a: &str, b: &str, normalize: bool) -> Result<DistanceSignal> {
    let raw = distance_signal(traj, a, b)?;
    let scaled = if normalize { normalize_max_aperture(&raw)? } else { raw };
    mean_remove(&scaled)
}

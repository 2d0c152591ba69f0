//! Analysis back-end for finger-tapping recordings: turns 2D keypoint
//! trajectories into a distance-versus-time signal, recognizes tap
//! peaks/troughs adaptively, extracts nine kinematic features, and compares
//! two measurement methods statistically.

pub mod error;
pub mod features;
pub mod ingest;
pub mod signal;
pub mod stats;
pub mod synth;
pub mod vertex;

pub use error::{Error, Result};

use ingest::TrajectorySet;
use vertex::AvrParams;

/// Everything a single-recording analysis produces.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub recording_id: String,
    pub signal: signal::DistanceSignal,
    pub avr: vertex::AvrOutput,
    pub features: features::FeatureReport,
}

/// Full pipeline for one recording: gap filling, distance signal (optionally
/// normalized to max aperture), mean removal, vertex recognition, features.
pub fn analyze_trajectory(
    traj: &TrajectorySet,
    keypoint_a: &str,
    keypoint_b: &str,
    params: &AvrParams,
    normalize: bool,
) -> Result<AnalysisResult> {
    let filled = ingest::fill_missing_all(traj)?;
    let sig = signal::prepare_signal(&filled, keypoint_a, keypoint_b, normalize)?;
    let avr = vertex::run_avr(&sig, params)?;
    let features = features::features_from_vertices(&avr.vertices)?;
    Ok(AnalysisResult { recording_id: traj.recording_id.clone(), signal: sig, avr, features })
}

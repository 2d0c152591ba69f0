//! Parsing, validation and normalization of trajectory and reference files.
//!
//! Two interchangeable trajectory formats are supported: a frame-indexed CSV
//! (`frame,keypoint,x,y` with an optional `# fps=.. recording=..` comment line)
//! and an equivalent JSON document. Reference measurements (features computed
//! by another method, e.g. a wearable sensor) come in as JSON.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_NAMES;

/// Per-frame 2D positions for named keypoints at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub recording_id: String,
    pub fps: f64,
    pub keypoints: Vec<KeypointTrack>,
    pub duration_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTrack {
    pub keypoint_id: String,
    /// One (x, y) pixel position per frame. Positions at frames flagged in
    /// `missing_mask` are placeholders until `fill_missing` runs.
    pub samples: Vec<(f64, f64)>,
    pub missing_mask: Vec<bool>,
}

impl KeypointTrack {
    pub fn has_missing(&self) -> bool {
        self.missing_mask.iter().any(|&m| m)
    }
}

impl TrajectorySet {
    pub fn validate(&self) -> Result<()> {
        if self.fps <= 0.0 || !self.fps.is_finite() {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        if self.duration_frames < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 frames, got {}",
                self.duration_frames
            )));
        }
        if self.keypoints.is_empty() {
            return Err(Error::InvalidInput("zero keypoints".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for kp in &self.keypoints {
            if !seen.insert(kp.keypoint_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate keypoint id: {}",
                    kp.keypoint_id
                )));
            }
            if kp.samples.len() != self.duration_frames || kp.missing_mask.len() != self.duration_frames {
                return Err(Error::InvalidInput(format!(
                    "keypoint {} has {} samples, expected {}",
                    kp.keypoint_id,
                    kp.samples.len(),
                    self.duration_frames
                )));
            }
            for (i, (&(x, y), &missing)) in kp.samples.iter().zip(&kp.missing_mask).enumerate() {
                if !missing && !(x.is_finite() && y.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "non-finite coordinate for {} at frame {i}",
                        kp.keypoint_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn track(&self, id: &str) -> Result<&KeypointTrack> {
        self.keypoints
            .iter()
            .find(|k| k.keypoint_id == id)
            .ok_or_else(|| Error::UnknownKeypoint(id.to_string()))
    }
}

/// Feature values reported by another measurement method for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeasurement {
    pub recording_id: String,
    pub method_name: String,
    #[serde(default)]
    pub condition: String,
    pub features: HashMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    Csv,
    Json,
}

#[derive(Deserialize)]
struct JsonTrack {
    id: String,
    xy: Vec<Option<(f64, f64)>>,
}

#[derive(Deserialize)]
struct JsonTrajectory {
    recording_id: String,
    fps: f64,
    keypoints: Vec<JsonTrack>,
}

#[derive(Serialize)]
struct JsonTrackOut<'a> {
    id: &'a str,
    xy: Vec<Option<(f64, f64)>>,
}

#[derive(Serialize)]
struct JsonTrajectoryOut<'a> {
    recording_id: &'a str,
    fps: f64,
    keypoints: Vec<JsonTrackOut<'a>>,
}

pub fn parse_trajectory(content: &str, format: TrajectoryFormat) -> Result<TrajectorySet> {
    match format {
        TrajectoryFormat::Csv => parse_trajectory_csv(content),
        TrajectoryFormat::Json => parse_trajectory_json(content),
    }
}

fn parse_trajectory_json(content: &str) -> Result<TrajectorySet> {
    let doc: JsonTrajectory = serde_json::from_str(content)?;
    let duration = doc
        .keypoints
        .first()
        .map(|k| k.xy.len())
        .ok_or_else(|| Error::InvalidInput("zero keypoints".into()))?;
    let keypoints = doc
        .keypoints
        .into_iter()
        .map(|k| {
            let missing_mask: Vec<bool> = k.xy.iter().map(|p| p.is_none()).collect();
            let samples = k.xy.iter().map(|p| p.unwrap_or((0.0, 0.0))).collect();
            KeypointTrack { keypoint_id: k.id, samples, missing_mask }
        })
        .collect();
    let set = TrajectorySet {
        recording_id: doc.recording_id,
        fps: doc.fps,
        keypoints,
        duration_frames: duration,
    };
    set.validate()?;
    Ok(set)
}

fn parse_trajectory_csv(content: &str) -> Result<TrajectorySet> {
    let mut fps = 30.0;
    let mut recording_id = String::new();
    let mut rows: Vec<(usize, String, f64, f64)> = Vec::new();
    let mut header_seen = false;
    let mut has_timestamps = false;

    for (lineno0, line) in content.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            // comment line: `# fps=<real> recording=<id>`
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("fps=") {
                    fps = v.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad fps value {v:?}"),
                    })?;
                    if fps <= 0.0 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("inconsistent fps header: fps must be positive, got {fps}"),
                        });
                    }
                } else if let Some(v) = token.strip_prefix("recording=") {
                    recording_id = v.to_string();
                }
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 4 || cols[0] != "frame" || cols[1] != "keypoint" || cols[2] != "x" || cols[3] != "y" {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected header `frame,keypoint,x,y`, got {line:?}"),
                });
            }
            has_timestamps = cols.get(4) == Some(&"t");
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if has_timestamps { 5 } else { 4 };
        if cols.len() != expected {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {expected} fields, got {}", cols.len()),
            });
        }
        let frame: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad frame index {:?}", cols[0]),
        })?;
        let x: f64 = cols[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad x value {:?}", cols[2]),
        })?;
        let y: f64 = cols[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad y value {:?}", cols[3]),
        })?;
        if has_timestamps {
            let t: f64 = cols[4].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad t value {:?}", cols[4]),
            })?;
            // per-row timestamps must agree with frame/fps to half a frame
            // period; they are validated then discarded
            let expected_t = frame as f64 / fps;
            if (t - expected_t).abs() > 0.5 / fps {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "timestamp {t} disagrees with frame {frame} at {fps} fps (expected {expected_t})"
                    ),
                });
            }
        }
        rows.push((frame, cols[1].to_string(), x, y));
    }

    if !header_seen {
        return Err(Error::Parse { line: 1, message: "missing header `frame,keypoint,x,y`".into() });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("zero keypoints".into()));
    }

    let duration = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let mut order: Vec<String> = Vec::new();
    let mut tracks: HashMap<String, (Vec<(f64, f64)>, Vec<bool>)> = HashMap::new();
    for (frame, kp, x, y) in rows {
        let entry = tracks.entry(kp.clone()).or_insert_with(|| {
            order.push(kp.clone());
            (vec![(0.0, 0.0); duration], vec![true; duration])
        });
        if !entry.1[frame] {
            return Err(Error::InvalidInput(format!("duplicate (frame {frame}, keypoint {kp}) row")));
        }
        entry.0[frame] = (x, y);
        entry.1[frame] = false;
    }

    let keypoints = order
        .into_iter()
        .map(|id| {
            let (samples, missing_mask) = tracks.remove(&id).unwrap();
            KeypointTrack { keypoint_id: id, samples, missing_mask }
        })
        .collect();

    let set = TrajectorySet { recording_id, fps, keypoints, duration_frames: duration };
    set.validate()?;
    Ok(set)
}

/// Serializes a trajectory to the CSV wire format; missing frames are skipped.
pub fn serialize_trajectory_csv(t: &TrajectorySet) -> String {
    let mut out = String::new();
    out.push_str(&format!("# fps={} recording={}\n", t.fps, t.recording_id));
    out.push_str("frame,keypoint,x,y\n");
    for frame in 0..t.duration_frames {
        for kp in &t.keypoints {
            if kp.missing_mask[frame] {
                continue;
            }
            let (x, y) = kp.samples[frame];
            out.push_str(&format!("{frame},{},{x},{y}\n", kp.keypoint_id));
        }
    }
    out
}

pub fn serialize_trajectory_json(t: &TrajectorySet) -> Result<String> {
    let doc = JsonTrajectoryOut {
        recording_id: &t.recording_id,
        fps: t.fps,
        keypoints: t
            .keypoints
            .iter()
            .map(|k| JsonTrackOut {
                id: &k.keypoint_id,
                xy: k
                    .samples
                    .iter()
                    .zip(&k.missing_mask)
                    .map(|(&p, &m)| if m { None } else { Some(p) })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn parse_reference(content: &str) -> Result<Vec<ReferenceMeasurement>> {
    let list: Vec<ReferenceMeasurement> = serde_json::from_str(content)?;
    for m in &list {
        if m.recording_id.is_empty() {
            return Err(Error::InvalidInput("missing recording_id in reference measurement".into()));
        }
        for name in m.features.keys() {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return Err(Error::UnknownFeature(name.clone()));
            }
        }
    }
    Ok(list)
}

/// Replaces missing samples by linear interpolation between the nearest
/// non-missing neighbors; leading/trailing gaps take the nearest value.
/// The missing mask is kept as-is for audit.
pub fn fill_missing(track: &KeypointTrack) -> Result<KeypointTrack> {
    let n = track.samples.len();
    let known: Vec<usize> = (0..n).filter(|&i| !track.missing_mask[i]).collect();
    if known.is_empty() {
        return Err(Error::AllMissing(track.keypoint_id.clone()));
    }
    let mut samples = track.samples.clone();
    for i in 0..n {
        if !track.missing_mask[i] {
            continue;
        }
        let next = known.iter().copied().find(|&k| k > i);
        let prev = known.iter().copied().rev().find(|&k| k < i);
        samples[i] = match (prev, next) {
            (Some(p), Some(q)) => {
                let w = (i - p) as f64 / (q - p) as f64;
                let (x0, y0) = track.samples[p];
                let (x1, y1) = track.samples[q];
                (x0 + w * (x1 - x0), y0 + w * (y1 - y0))
            }
            (Some(p), None) => track.samples[p],
            (None, Some(q)) => track.samples[q],
            (None, None) => unreachable!(),
        };
    }
    Ok(KeypointTrack {
        keypoint_id: track.keypoint_id.clone(),
        samples,
        missing_mask: track.missing_mask.clone(),
    })
}

/// Fills every track of a trajectory set in place of the originals.
pub fn fill_missing_all(t: &TrajectorySet) -> Result<TrajectorySet> {
    Ok(TrajectorySet {
        recording_id: t.recording_id.clone(),
        fps: t.fps,
        keypoints: t.keypoints.iter().map(fill_missing).collect::<Result<_>>()?,
        duration_frames: t.duration_frames,
    })
}

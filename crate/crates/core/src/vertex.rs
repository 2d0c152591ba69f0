//! Adaptive vertex recognition: fluctuation filtering, signal reconstruction,
//! moving-mean platform classification, and peak/trough localization.
//!
//! The chain is: ΔS -> threshold against γ_flatness·R -> rebuild S' with flat
//! platforms anchored to the local mean of S -> compare platform sections
//! against the moving mean μ to assign polarity -> place one vertex per
//! interior platform (short platforms at the local extremum of S, long holds
//! at the section's central frame) -> enforce strict peak/trough alternation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::DistanceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvrParams {
    /// Fluctuation threshold relative to the signal range (default 0.1).
    pub gamma_flatness: f64,
    /// Moving-mean window size relative to signal length (default 0.1).
    pub gamma_window: f64,
    /// Platform-length threshold relative to signal length (default 0.01).
    pub gamma_platform: f64,
}

impl Default for AvrParams {
    fn default() -> Self {
        AvrParams { gamma_flatness: 0.1, gamma_window: 0.1, gamma_platform: 0.01 }
    }
}

impl AvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_flatness > 0.0 && self.gamma_flatness < 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_flatness must lie in (0,1), got {}",
                self.gamma_flatness
            )));
        }
        if !(self.gamma_window > 0.0 && self.gamma_window <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_window must lie in (0,1], got {}",
                self.gamma_window
            )));
        }
        if !(self.gamma_platform > 0.0 && self.gamma_platform < 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_platform must lie in (0,1), got {}",
                self.gamma_platform
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectionKind {
    Platform,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Peak,
    Trough,
    None,
}

/// Maximal run of frames where the filtered slope is uniformly zero
/// (platform) or uniformly nonzero (transition). Adjacent sections share
/// their boundary frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub start_frame: usize,
    pub end_frame: usize,
    pub kind: SectionKind,
    pub polarity: Polarity,
}

impl Section {
    pub fn len_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    Peak,
    Trough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub time: f64,
    pub frame: usize,
    pub height: f64,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSeries {
    pub vertices: Vec<Vertex>,
    pub source_params: AvrParams,
}

impl VertexSeries {
    pub fn peaks(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(|v| v.kind == VertexKind::Peak)
    }

    pub fn troughs(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(|v| v.kind == VertexKind::Trough)
    }
}

/// Zeroes frame-to-frame differences whose magnitude falls below
/// γ_flatness·R. Output has length N-1.
pub fn fluctuation_removal(s: &DistanceSignal, p: &AvrParams) -> Result<Vec<f64>> {
    if !s.mean_removed {
        return Err(Error::InvalidInput("fluctuation_removal requires a mean-removed signal".into()));
    }
    if s.range_r <= 0.0 {
        return Err(Error::FlatRecording);
    }
    let threshold = p.gamma_flatness * s.range_r;
    Ok(s.values
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d.abs() < threshold { 0.0 } else { d }
        })
        .collect())
}

fn zero_runs(delta: &[f64]) -> Vec<(usize, usize, bool)> {
    // (first delta idx, last delta idx, is_zero_run)
    let mut runs = Vec::new();
    let mut start = 0usize;
    for i in 1..=delta.len() {
        if i == delta.len() || (delta[i] == 0.0) != (delta[start] == 0.0) {
            runs.push((start, i - 1, delta[start] == 0.0));
            start = i;
        }
    }
    runs
}

/// Rebuilds the signal from the filtered differences. Platform frames are
/// anchored to the mean of the original signal over the platform so the
/// reconstruction does not drift.
pub fn reconstruct(s: &DistanceSignal, delta_filtered: &[f64]) -> Result<Vec<f64>> {
    let n = s.len();
    if delta_filtered.len() + 1 != n {
        return Err(Error::ShapeMismatch(format!(
            "delta series length {} does not match signal length {n}",
            delta_filtered.len()
        )));
    }
    let mut out = vec![0.0; n];
    out[0] = s.values[0];
    for (rs, re, is_zero) in zero_runs(delta_filtered) {
        // a run over delta indices rs..=re spans frames rs..=re+1; adjacent
        // runs share their boundary frame
        let lo = rs;
        let hi = re + 1;
        if is_zero {
            let mean = s.values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            for v in out.iter_mut().take(hi + 1).skip(lo) {
                *v = mean;
            }
        } else {
            for f in lo + 1..=hi {
                out[f] = out[f - 1] + delta_filtered[f - 1];
            }
        }
    }
    Ok(out)
}

/// Moving average with window n = round(γ_window · N), truncated at edges.
pub fn moving_mean(reconstructed: &[f64], p: &AvrParams) -> Vec<f64> {
    let n_frames = reconstructed.len();
    let window = ((p.gamma_window * n_frames as f64).round() as usize).max(1);
    let half = window / 2;
    (0..n_frames)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n_frames - 1);
            reconstructed[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Splits the signal into platform/transition sections from the filtered
/// delta runs and classifies each platform against the moving mean.
pub fn segment_and_classify(
    reconstructed: &[f64],
    delta_filtered: &[f64],
    mu: &[f64],
) -> Result<Vec<Section>> {
    let n = reconstructed.len();
    if delta_filtered.len() + 1 != n || mu.len() != n {
        return Err(Error::ShapeMismatch("inconsistent AVR series lengths".into()));
    }
    let mut sections = Vec::new();
    for (rs, re, is_zero) in zero_runs(delta_filtered) {
        let start = rs;
        let end = re + 1;
        let kind = if is_zero { SectionKind::Platform } else { SectionKind::Transition };
        let polarity = if is_zero {
            let sec_mean = reconstructed[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            let mu_mean = mu[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            if sec_mean > mu_mean { Polarity::Peak } else { Polarity::Trough }
        } else {
            Polarity::None
        };
        sections.push(Section { start_frame: start, end_frame: end, kind, polarity });
    }
    Ok(sections)
}

fn section_extremum(values: &[f64], sec: &Section, want_max: bool) -> (usize, f64) {
    let mut best_frame = sec.start_frame;
    let mut best = values[sec.start_frame];
    for f in sec.start_frame..=sec.end_frame {
        let v = values[f];
        let better = if want_max { v > best } else { v < best };
        if better {
            best = v;
            best_frame = f;
        }
    }
    (best_frame, best)
}

/// Places one vertex per interior platform. The first and last platforms of
/// the recording are dropped as waiting periods.
pub fn locate_vertices(
    sections: &[Section],
    s: &DistanceSignal,
    p: &AvrParams,
) -> Result<VertexSeries> {
    let platforms: Vec<&Section> =
        sections.iter().filter(|sec| sec.kind == SectionKind::Platform).collect();
    if platforms.len() < 3 {
        return Err(Error::Unanalyzable(format!(
            "no interior platform: found {} platform sections, need at least 3",
            platforms.len()
        )));
    }
    let n = s.len();
    let long_threshold = p.gamma_platform * n as f64;
    let mut vertices = Vec::new();
    for sec in &platforms[1..platforms.len() - 1] {
        let want_max = sec.polarity == Polarity::Peak;
        let (frame, height) = if (sec.len_frames() as f64) <= long_threshold {
            section_extremum(&s.values, sec, want_max)
        } else {
            // long hold: vertex at the central frame, height from the
            // section extremum when the center is in the platform interior
            let frame = (sec.start_frame + sec.end_frame) / 2;
            let height = if frame > sec.start_frame && frame < sec.end_frame {
                section_extremum(&s.values, sec, want_max).1
            } else {
                s.values[frame]
            };
            (frame, height)
        };
        vertices.push(Vertex {
            time: frame as f64 / s.fps,
            frame,
            height,
            kind: if want_max { VertexKind::Peak } else { VertexKind::Trough },
        });
    }
    Ok(VertexSeries { vertices, source_params: *p })
}

/// Collapses runs of same-kind vertices, keeping the most extreme one
/// (highest peak, lowest trough; ties keep the earliest).
pub fn enforce_alternation(v: &VertexSeries) -> VertexSeries {
    let mut out: Vec<Vertex> = Vec::with_capacity(v.vertices.len());
    for &vert in &v.vertices {
        match out.last_mut() {
            Some(last) if last.kind == vert.kind => {
                let replace = match vert.kind {
                    VertexKind::Peak => vert.height > last.height,
                    VertexKind::Trough => vert.height < last.height,
                };
                if replace {
                    *last = vert;
                }
            }
            _ => out.push(vert),
        }
    }
    VertexSeries { vertices: out, source_params: v.source_params }
}

/// All intermediates of the AVR chain, for diagnostics and plotting.
#[derive(Debug, Clone)]
pub struct AvrOutput {
    pub delta_filtered: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub moving_mean: Vec<f64>,
    pub sections: Vec<Section>,
    pub vertices: VertexSeries,
}

/// Runs the full adaptive vertex recognition chain on a mean-removed signal.
pub fn run_avr(s: &DistanceSignal, p: &AvrParams) -> Result<AvrOutput> {
    p.validate()?;
    let delta_filtered = fluctuation_removal(s, p)?;
    let reconstructed = reconstruct(s, &delta_filtered)?;
    let mu = moving_mean(&reconstructed, p);
    let sections = segment_and_classify(&reconstructed, &delta_filtered, &mu)?;
    let located = locate_vertices(&sections, s, p)?;
    let vertices = enforce_alternation(&located);
    let peaks = vertices.peaks().count();
    let troughs = vertices.troughs().count();
    if peaks < 2 || troughs < 1 {
        return Err(Error::Unanalyzable(format!(
            "too few taps after alternation: {peaks} peaks, {troughs} troughs"
        )));
    }
    Ok(AvrOutput { delta_filtered, reconstructed, moving_mean: mu, sections, vertices })
}

pub fn detect_vertices(s: &DistanceSignal, p: &AvrParams) -> Result<VertexSeries> {
    Ok(run_avr(s, p)?.vertices)
}

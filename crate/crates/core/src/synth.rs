//! Synthetic tapping trajectories with exact ground truth, used as the
//! independent oracle for end-to-end tests.
//!
//! The aperture follows a raised-cosine tap cycle with a contact dwell at
//! each extremum (fraction `DWELL_FRACTION` of every half-cycle is spent
//! holding the extremum, split evenly around it). The dwell is what real
//! tapping looks like and it guarantees flat sections around every vertex
//! even when a cycle spans only a handful of frames. Extremum times are
//! unaffected: each dwell is centered on the nominal extremum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureReport, TapGeometry};
use crate::ingest::{KeypointTrack, TrajectorySet};

/// Fraction of each half-cycle spent dwelling at the extrema.
pub const DWELL_FRACTION: f64 = 0.84;

/// Residual phase progress inside the dwell, as a fraction of the half-cycle.
/// A perfectly flat dwell would leave the frames around an extremum exactly
/// tied, so with noise the detected vertex frame becomes a coin flip; a small
/// residual slope keeps the frame nearest the apex strictly best while the
/// frame-to-frame steps stay far below the flatness threshold.
pub const DWELL_RESIDUAL: f64 = 0.32;

/// Pixel aperture when fingers touch.
const BASELINE_PX: f64 = 4.0;
/// Pixel aperture swing of a full-amplitude tap.
const SWING_PX: f64 = 196.0;

pub const MAX_APERTURE_PX: f64 = BASELINE_PX + SWING_PX;

fn default_fps() -> f64 {
    30.0
}

fn default_decay() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default)]
    pub recording_id: String,
    /// Tapping frequency in Hz (start of the profile).
    pub frequency: f64,
    /// End of a linear frequency ramp; equal to `frequency` when absent.
    #[serde(default)]
    pub frequency_end: Option<f64>,
    /// Active tapping duration in seconds (waits and holds come on top).
    pub duration: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Per-tap multiplicative amplitude factor in (0, 1].
    #[serde(default = "default_decay")]
    pub amplitude_decay: f64,
    /// Gaussian coordinate noise as a fraction of the maximum aperture.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Open holds inserted into the tapping: (start in active seconds, length
    /// in seconds). The tap cycle freezes for the hold's duration.
    #[serde(default)]
    pub hold_segments: Vec<(f64, f64)>,
    /// Seconds of stillness prepended and appended to the recording.
    #[serde(default)]
    pub waiting_period: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let f_end = self.frequency_end.unwrap_or(self.frequency);
        for f in [self.frequency, f_end] {
            if !(f > 0.0 && f < self.fps / 2.0) {
                return Err(Error::InvalidSpec(format!(
                    "frequency {f} Hz must lie in (0, fps/2 = {})",
                    self.fps / 2.0
                )));
            }
        }
        if self.duration <= 0.0 {
            return Err(Error::InvalidSpec("duration must be positive".into()));
        }
        if self.fps <= 0.0 {
            return Err(Error::InvalidSpec("fps must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidSpec("noise_sigma must be non-negative".into()));
        }
        if !(self.amplitude_decay > 0.0 && self.amplitude_decay <= 1.0) {
            return Err(Error::InvalidSpec("amplitude_decay must lie in (0, 1]".into()));
        }
        if self.waiting_period < 0.0 {
            return Err(Error::InvalidSpec("waiting_period must be non-negative".into()));
        }
        for &(start, len) in &self.hold_segments {
            if start < 0.0 || start > self.duration || len <= 0.0 {
                return Err(Error::InvalidSpec(format!("bad hold segment ({start}, {len})")));
            }
        }
        Ok(())
    }

    fn f_end(&self) -> f64 {
        self.frequency_end.unwrap_or(self.frequency)
    }

    /// Cycle count accumulated after `tau` seconds of active tapping.
    fn phase(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, self.duration);
        self.frequency * tau + (self.f_end() - self.frequency) * tau * tau / (2.0 * self.duration)
    }

    /// Inverse of `phase`, exact for the linear ramp (quadratic formula with
    /// one Newton polish).
    fn time_of_phase(&self, phi: f64) -> f64 {
        let f0 = self.frequency;
        let slope = (self.f_end() - f0) / self.duration;
        let mut tau = if slope.abs() < 1e-12 {
            phi / f0
        } else {
            (-f0 + (f0 * f0 + 2.0 * slope * phi).sqrt()) / slope
        };
        for _ in 0..2 {
            let f_tau = f0 + slope * tau;
            if f_tau > 0.0 {
                tau -= (self.phase(tau) - phi) / f_tau;
            }
        }
        tau
    }

    fn total_hold(&self) -> f64 {
        self.hold_segments.iter().map(|&(_, l)| l).sum()
    }

    /// Output-timeline duration: waits + active tapping + holds.
    pub fn total_duration(&self) -> f64 {
        2.0 * self.waiting_period + self.duration + self.total_hold()
    }

    /// Active time reached at output time `t`.
    fn active_time(&self, t: f64) -> f64 {
        let t = t - self.waiting_period;
        if t <= 0.0 {
            return 0.0;
        }
        let mut holds = self.hold_segments.clone();
        holds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut consumed = 0.0;
        for (start, len) in holds {
            let hold_begin = start + consumed;
            if t < hold_begin {
                break;
            }
            if t < hold_begin + len {
                return start;
            }
            consumed += len;
        }
        (t - consumed).clamp(0.0, self.duration)
    }

    /// Output time at which active time `tau` occurs. A vertex whose active
    /// time coincides with a hold start maps to the hold's center.
    fn output_time(&self, tau: f64) -> f64 {
        let mut holds = self.hold_segments.clone();
        holds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut t = self.waiting_period + tau;
        for (start, len) in holds {
            if start < tau {
                t += len;
            } else if (start - tau).abs() < 1e-9 {
                t += len / 2.0;
            }
        }
        t
    }

    /// Noiseless aperture in pixels at output time `t`.
    pub fn aperture(&self, t: f64) -> f64 {
        let tau = self.active_time(t);
        let phi = self.phase(tau);
        let half = (2.0 * phi).floor();
        let s = 2.0 * phi - half;
        // dwell at both ends of every half-cycle, with a residual creep so
        // the extremum is attained only at the nominal extremum time
        let rho = DWELL_FRACTION;
        let eps = DWELL_RESIDUAL;
        let s_warp = if s < rho / 2.0 {
            s * eps / rho
        } else if s <= 1.0 - rho / 2.0 {
            eps / 2.0 + (s - rho / 2.0) * (1.0 - eps) / (1.0 - rho)
        } else {
            1.0 - (1.0 - s) * eps / rho
        };
        let shape = if (half as i64) % 2 == 0 {
            (1.0 - (std::f64::consts::PI * s_warp).cos()) / 2.0
        } else {
            (1.0 + (std::f64::consts::PI * s_warp).cos()) / 2.0
        };
        let tap_index = phi.floor().max(0.0) as i32;
        let amp = self.amplitude_decay.powi(tap_index);
        BASELINE_PX + SWING_PX * amp * shape
    }
}

/// Exact vertex times/amplitudes and analytic features of the noiseless
/// waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_peak_times: Vec<f64>,
    pub true_valley_times: Vec<f64>,
    /// Normalized per-tap amplitudes (max exactly 1).
    pub true_amplitudes: Vec<f64>,
    pub true_features: Option<FeatureReport>,
}

/// Exact extremum times of the noiseless waveform, in the output timeline.
/// Boundary valleys at phase 0 and at the very end are part of the waiting
/// platforms and are not listed.
pub fn oracle_vertices(spec: &SynthSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let phi_end = spec.phase(spec.duration);
    let mut peak_times = Vec::new();
    let mut amplitudes = Vec::new();
    let mut k = 1u32;
    loop {
        let phi = k as f64 - 0.5;
        if phi >= phi_end {
            break;
        }
        peak_times.push(spec.output_time(spec.time_of_phase(phi)));
        amplitudes.push(spec.amplitude_decay.powi(k as i32 - 1));
        k += 1;
    }
    let mut valley_times = Vec::new();
    let mut k = 1u32;
    loop {
        let phi = k as f64;
        if phi >= phi_end {
            break;
        }
        valley_times.push(spec.output_time(spec.time_of_phase(phi)));
        k += 1;
    }
    let max_amp = amplitudes.iter().cloned().fold(0.0, f64::max);
    if max_amp > 0.0 {
        for a in &mut amplitudes {
            *a /= max_amp;
        }
    }
    let true_features = if peak_times.len() >= 2 && valley_times.len() >= 2 {
        Some(extract_features(&TapGeometry {
            peak_times: peak_times.clone(),
            valley_times: valley_times.clone(),
            amplitudes: amplitudes.clone(),
        })?)
    } else {
        None
    };
    Ok(GroundTruth {
        true_peak_times: peak_times,
        true_valley_times: valley_times,
        true_amplitudes: amplitudes,
        true_features,
    })
}

/// Portable 64-bit xorshift* generator; same seed, same stream everywhere.
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        // splitmix64 scramble so seed 0 works and nearby seeds decorrelate
        let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        Rng { state: if z == 0 { 0x853C49E6748FEA9B } else { z } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Generates a two-keypoint trajectory whose inter-keypoint distance follows
/// the spec's tapping waveform, plus the matching ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(TrajectorySet, GroundTruth)> {
    spec.validate()?;
    let truth = oracle_vertices(spec)?;
    let n = (spec.total_duration() * spec.fps).round() as usize;
    if n < 2 {
        return Err(Error::InvalidSpec("recording shorter than 2 frames".into()));
    }
    let sigma_px = spec.noise_sigma * MAX_APERTURE_PX;
    let mut rng = Rng::new(spec.seed);
    let anchor = (320.0, 240.0);
    let mut thumb = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    for i in 0..n {
        // sample at frame centers: a camera integrates over the exposure,
        // so the frame's value is the mid-frame one
        let t = (i as f64 + 0.48) / spec.fps;
        let d = spec.aperture(t);
        let (mut tx, mut ty) = anchor;
        let (mut ix, mut iy) = (anchor.0, anchor.1 - d);
        if sigma_px > 0.0 {
            tx += sigma_px * rng.normal();
            ty += sigma_px * rng.normal();
            ix += sigma_px * rng.normal();
            iy += sigma_px * rng.normal();
        }
        thumb.push((tx, ty));
        index.push((ix, iy));
    }
    let traj = TrajectorySet {
        recording_id: if spec.recording_id.is_empty() {
            format!("synth-{}", spec.seed)
        } else {
            spec.recording_id.clone()
        },
        fps: spec.fps,
        duration_frames: n,
        keypoints: vec![
            KeypointTrack {
                keypoint_id: "thumb-tip".into(),
                missing_mask: vec![false; n],
                samples: thumb,
            },
            KeypointTrack {
                keypoint_id: "index-fingertip".into(),
                missing_mask: vec![false; n],
                samples: index,
            },
        ],
    };
    Ok((traj, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(freq: f64, duration: f64) -> SynthSpec {
        SynthSpec {
            recording_id: String::new(),
            frequency: freq,
            frequency_end: None,
            duration,
            fps: 30.0,
            amplitude_decay: 1.0,
            noise_sigma: 0.0,
            hold_segments: vec![],
            waiting_period: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn two_hz_twenty_seconds_truth() {
        let truth = oracle_vertices(&spec(2.0, 20.0)).unwrap();
        assert_eq!(truth.true_peak_times.len(), 40);
        let f = truth.true_features.as_ref().unwrap();
        assert_abs_diff_eq!(f.m_tf, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.cov_tf, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_frequency_peak_spacing() {
        let truth = oracle_vertices(&spec(1.0, 10.0)).unwrap();
        for (k, &t) in truth.true_peak_times.iter().enumerate() {
            assert_abs_diff_eq!(t, 0.5 + k as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn waiting_period_shifts_vertices() {
        let base = oracle_vertices(&spec(1.0, 10.0)).unwrap();
        let mut s = spec(1.0, 10.0);
        s.waiting_period = 2.0;
        let shifted = oracle_vertices(&s).unwrap();
        for (a, b) in base.true_peak_times.iter().zip(&shifted.true_peak_times) {
            assert_abs_diff_eq!(b - a, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn frequency_ramp_positive_dos() {
        let mut s = spec(3.0, 10.0);
        s.frequency_end = Some(2.0);
        let truth = oracle_vertices(&s).unwrap();
        let f = truth.true_features.as_ref().unwrap();
        assert!(f.dos > 0.0, "DoS {} not positive for a slowing ramp", f.dos);
        // first interval shorter than last
        let first = truth.true_peak_times[1] - truth.true_peak_times[0];
        let n = truth.true_peak_times.len();
        let last = truth.true_peak_times[n - 1] - truth.true_peak_times[n - 2];
        assert!(first < last);
    }

    #[test]
    fn amplitude_decay_geometric_doa() {
        let mut s = spec(2.0, 10.0);
        s.amplitude_decay = 0.98;
        let truth = oracle_vertices(&s).unwrap();
        let kp = truth.true_amplitudes.len();
        for (k, &a) in truth.true_amplitudes.iter().enumerate() {
            assert_abs_diff_eq!(a, 0.98f64.powi(k as i32), epsilon = 1e-12);
        }
        let f = truth.true_features.as_ref().unwrap();
        let expected = (1.0 / 0.98f64.powi(kp as i32 - 1)).ln() / kp as f64;
        assert_abs_diff_eq!(f.doa, expected, epsilon = 1e-9);
    }

    #[test]
    fn hold_at_peak_centers_vertex() {
        let mut s = spec(1.0, 10.0);
        // first peak at active time 0.5 s, hold 3 s
        s.hold_segments = vec![(0.5, 3.0)];
        let truth = oracle_vertices(&s).unwrap();
        assert_abs_diff_eq!(truth.true_peak_times[0], 0.5 + 1.5, epsilon = 1e-9);
        // later vertices shift by the full hold
        assert_abs_diff_eq!(truth.true_peak_times[1], 1.5 + 3.0, epsilon = 1e-9);
    }

    #[test]
    fn generate_frame_count() {
        let (traj, _) = generate(&spec(0.5, 20.0)).unwrap();
        assert_eq!(traj.duration_frames, 600);
        assert_eq!(traj.keypoints.len(), 2);
        traj.validate().unwrap();
    }

    #[test]
    fn same_seed_identical_output() {
        let mut s = spec(2.0, 5.0);
        s.noise_sigma = 0.02;
        let (a, _) = generate(&s).unwrap();
        let (b, _) = generate(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_differs() {
        let mut s = spec(2.0, 5.0);
        s.noise_sigma = 0.02;
        let (a, _) = generate(&s).unwrap();
        s.seed = 2;
        let (b, _) = generate(&s).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn nyquist_violation_rejected() {
        assert!(matches!(generate(&spec(15.0, 5.0)), Err(Error::InvalidSpec(_))));
        assert!(matches!(generate(&spec(20.0, 5.0)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn aperture_bounds_and_dwell() {
        let s = spec(2.0, 10.0);
        for i in 0..300 {
            let d = s.aperture(i as f64 / 30.0);
            assert!((BASELINE_PX..=MAX_APERTURE_PX + 1e-9).contains(&d));
        }
        // dwell: aperture peaks exactly at the nominal peak time, and frames
        // just around it sit within a few pixels of the maximum
        let peak_t = 0.25; // phase 0.5 at 2 Hz
        assert_abs_diff_eq!(s.aperture(peak_t), MAX_APERTURE_PX, epsilon = 1e-9);
        for dt in [0.03, -0.03] {
            let d = s.aperture(peak_t + dt);
            assert!(d < MAX_APERTURE_PX, "dwell must keep the apex strictly best");
            assert!(MAX_APERTURE_PX - d < 3.0, "dwell too steep: {d}");
        }
    }

    #[test]
    fn rng_reproducible_and_normalish() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut r = Rng::new(7);
        let n = 20000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = r.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}

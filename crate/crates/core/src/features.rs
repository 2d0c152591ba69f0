//! The nine hand-kinematic features computed from a recognized vertex series:
//! speed (M-TF, TTC, MS, M-ITI, DoS), amplitude (COV-A, DoA) and rhythm
//! (COV-TF, IIV).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vertex::VertexSeries;

/// Canonical wire names of the nine features.
pub const FEATURE_NAMES: [&str; 9] =
    ["M-TF", "TTC", "MS", "M-ITI", "DoS", "COV-A", "DoA", "COV-TF", "IIV"];

/// Peak/valley timing and normalized per-tap amplitudes, the direct inputs
/// of the feature equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapGeometry {
    pub peak_times: Vec<f64>,
    pub valley_times: Vec<f64>,
    /// Normalized to the largest tap; in (0, 1] with max exactly 1.
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    #[serde(rename = "M-TF")]
    pub m_tf: f64,
    #[serde(rename = "TTC")]
    pub ttc: usize,
    #[serde(rename = "MS")]
    pub ms: f64,
    #[serde(rename = "M-ITI")]
    pub m_iti: f64,
    #[serde(rename = "DoS")]
    pub dos: f64,
    #[serde(rename = "COV-A")]
    pub cov_a: f64,
    #[serde(rename = "DoA")]
    pub doa: f64,
    #[serde(rename = "COV-TF")]
    pub cov_tf: f64,
    #[serde(rename = "IIV")]
    pub iiv: f64,
    /// Set when the mean inter-peak interval and M-ITI (valley-based)
    /// disagree by more than 10% of M-ITI. IIV mixes the two by
    /// definition, so a large gap makes IIV hard to interpret.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub iti_mismatch: bool,
}

impl FeatureReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "M-TF" => Some(self.m_tf),
            "TTC" => Some(self.ttc as f64),
            "MS" => Some(self.ms),
            "M-ITI" => Some(self.m_iti),
            "DoS" => Some(self.dos),
            "COV-A" => Some(self.cov_a),
            "DoA" => Some(self.doa),
            "COV-TF" => Some(self.cov_tf),
            "IIV" => Some(self.iiv),
            _ => None,
        }
    }
}

/// Builds TapGeometry from an alternating vertex series. The amplitude of
/// each peak is its height minus the mean height of the adjacent troughs
/// (one-sided at the series ends), normalized to the largest tap.
pub fn tap_geometry(v: &VertexSeries) -> Result<TapGeometry> {
    let peaks: Vec<_> = v.peaks().cloned().collect();
    let troughs: Vec<_> = v.troughs().cloned().collect();
    if peaks.len() < 2 || troughs.len() < 2 {
        return Err(Error::InsufficientVertices { peaks: peaks.len(), troughs: troughs.len() });
    }
    let mut amplitudes = Vec::with_capacity(peaks.len());
    for pk in &peaks {
        let before = troughs.iter().rev().find(|t| t.time < pk.time);
        let after = troughs.iter().find(|t| t.time > pk.time);
        let base = match (before, after) {
            (Some(a), Some(b)) => (a.height + b.height) / 2.0,
            (Some(a), None) => a.height,
            (None, Some(b)) => b.height,
            (None, None) => unreachable!("troughs.len() >= 2"),
        };
        amplitudes.push(pk.height - base);
    }
    let max = amplitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::Unanalyzable("non-positive tap amplitudes".into()));
    }
    for a in &mut amplitudes {
        *a /= max;
    }
    Ok(TapGeometry {
        peak_times: peaks.iter().map(|p| p.time).collect(),
        valley_times: troughs.iter().map(|t| t.time).collect(),
        amplitudes,
    })
}

fn intervals(times: &[f64]) -> Result<Vec<f64>> {
    times
        .windows(2)
        .map(|w| {
            let dt = w[1] - w[0];
            if dt <= 0.0 {
                Err(Error::NonPositiveInterval { at: w[1] })
            } else {
                Ok(dt)
            }
        })
        .collect()
}

pub fn extract_features(g: &TapGeometry) -> Result<FeatureReport> {
    let kp = g.peak_times.len();
    let kv = g.valley_times.len();
    if kp < 2 || kv < 2 {
        return Err(Error::InsufficientVertices { peaks: kp, troughs: kv });
    }
    let peak_intervals = intervals(&g.peak_times)?;
    let valley_intervals = intervals(&g.valley_times)?;
    let freqs: Vec<f64> = peak_intervals.iter().map(|dt| 1.0 / dt).collect();

    let m_tf = freqs.iter().sum::<f64>() / freqs.len() as f64;
    let ttc = kp.min(kv);
    let ms = 1.0 / peak_intervals.iter().cloned().fold(f64::INFINITY, f64::min);
    let m_iti = valley_intervals.iter().sum::<f64>() / valley_intervals.len() as f64;
    let dos = (freqs[0] / freqs[freqs.len() - 1]).ln() / (kp - 1) as f64;

    let a_mean = g.amplitudes.iter().sum::<f64>() / kp as f64;
    let a_var = g.amplitudes.iter().map(|a| (a - a_mean).powi(2)).sum::<f64>() / kp as f64;
    let cov_a = a_var.sqrt() / a_mean;

    let doa = (g.amplitudes[0] / g.amplitudes[kp - 1]).ln() / kp as f64;

    let f_var = freqs.iter().map(|f| (f - m_tf).powi(2)).sum::<f64>() / (kp - 1) as f64;
    let cov_tf = f_var.sqrt() / m_tf;

    // IIV mixes peak intervals with the valley-based M-ITI; kept as defined
    let iiv = (peak_intervals.iter().map(|dt| (dt - m_iti).powi(2)).sum::<f64>()
        / (kp - 1) as f64)
        .sqrt();

    let mean_peak_interval = peak_intervals.iter().sum::<f64>() / peak_intervals.len() as f64;
    let iti_mismatch = (mean_peak_interval - m_iti).abs() > 0.1 * m_iti;

    Ok(FeatureReport { m_tf, ttc, ms, m_iti, dos, cov_a, doa, cov_tf, iiv, iti_mismatch })
}

/// Convenience: vertex series straight to features.
pub fn features_from_vertices(v: &VertexSeries) -> Result<FeatureReport> {
    extract_features(&tap_geometry(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertex::{AvrParams, Vertex, VertexKind, VertexSeries};
    use approx::assert_abs_diff_eq;

    fn series(verts: Vec<(f64, f64, VertexKind)>) -> VertexSeries {
        VertexSeries {
            vertices: verts
                .into_iter()
                .map(|(t, h, kind)| Vertex { time: t, frame: (t * 30.0).round() as usize, height: h, kind })
                .collect(),
            source_params: AvrParams::default(),
        }
    }

    fn uniform_series() -> VertexSeries {
        use VertexKind::*;
        series(vec![
            (0.5, 1.0, Peak),
            (1.0, 0.0, Trough),
            (1.5, 1.0, Peak),
            (2.0, 0.0, Trough),
            (2.5, 1.0, Peak),
            (3.0, 0.0, Trough),
            (3.5, 1.0, Peak),
        ])
    }

    #[test]
    fn geometry_uniform_amplitudes() {
        let g = tap_geometry(&uniform_series()).unwrap();
        assert_eq!(g.peak_times, vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(g.valley_times, vec![1.0, 2.0, 3.0]);
        assert_eq!(g.amplitudes, vec![1.0; 4]);
    }

    #[test]
    fn geometry_normalizes_to_max() {
        use VertexKind::*;
        let v = series(vec![
            (0.0, 0.0, Trough),
            (0.5, 2.0, Peak),
            (1.0, 0.0, Trough),
            (1.5, 1.0, Peak),
            (2.0, 0.0, Trough),
        ]);
        let g = tap_geometry(&v).unwrap();
        assert_eq!(g.amplitudes, vec![1.0, 0.5]);
    }

    #[test]
    fn geometry_adjacent_trough_mean() {
        use VertexKind::*;
        // trough drift: bases 0.0/0.2 and 0.2/0.4 -> raw amps 1.9 and 1.2
        let v = series(vec![
            (0.0, 0.0, Trough),
            (0.5, 2.0, Peak),
            (1.0, 0.2, Trough),
            (1.5, 1.5, Peak),
            (2.0, 0.4, Trough),
        ]);
        let g = tap_geometry(&v).unwrap();
        assert_abs_diff_eq!(g.amplitudes[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.amplitudes[1], 1.2 / 1.9, epsilon = 1e-12);
    }

    #[test]
    fn geometry_insufficient_vertices() {
        use VertexKind::*;
        let v = series(vec![(0.5, 1.0, Peak), (1.0, 0.0, Trough), (1.5, 1.0, Peak)]);
        assert!(matches!(tap_geometry(&v), Err(Error::InsufficientVertices { .. })));
    }

    #[test]
    fn periodic_input_all_variability_zero() {
        let g = tap_geometry(&uniform_series()).unwrap();
        let f = extract_features(&g).unwrap();
        assert_abs_diff_eq!(f.m_tf, 1.0, epsilon = 1e-12);
        assert_eq!(f.ttc, 3);
        assert_abs_diff_eq!(f.ms, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.m_iti, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.dos, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.cov_a, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.doa, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.cov_tf, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.iiv, 0.0, epsilon = 1e-9);
        assert!(!f.iti_mismatch);
    }

    #[test]
    fn hand_evaluated_nonuniform_speeds() {
        let g = TapGeometry {
            peak_times: vec![0.5, 1.0, 2.0],
            valley_times: vec![0.75, 1.5],
            amplitudes: vec![1.0, 1.0, 1.0],
        };
        let f = extract_features(&g).unwrap();
        assert_abs_diff_eq!(f.m_tf, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.ms, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.dos, 0.5 * 2.0f64.ln(), epsilon = 1e-4);
        assert_abs_diff_eq!(f.cov_tf, 1.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn hand_evaluated_amplitude_decrement() {
        let g = TapGeometry {
            peak_times: vec![0.5, 1.5, 2.5],
            valley_times: vec![1.0, 2.0],
            amplitudes: vec![1.0, 0.8, 0.6],
        };
        let f = extract_features(&g).unwrap();
        assert_abs_diff_eq!(f.doa, (1.0f64 / 0.6).ln() / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.doa, 0.1703, epsilon = 1e-4);
    }

    #[test]
    fn time_shift_invariance() {
        let g = TapGeometry {
            peak_times: vec![0.5, 1.0, 2.0],
            valley_times: vec![0.75, 1.5],
            amplitudes: vec![1.0, 0.7, 0.9],
        };
        let shifted = TapGeometry {
            peak_times: g.peak_times.iter().map(|t| t + 13.25).collect(),
            valley_times: g.valley_times.iter().map(|t| t + 13.25).collect(),
            amplitudes: g.amplitudes.clone(),
        };
        let f1 = extract_features(&g).unwrap();
        let f2 = extract_features(&shifted).unwrap();
        assert_abs_diff_eq!(f1.m_tf, f2.m_tf, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.iiv, f2.iiv, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.dos, f2.dos, epsilon = 1e-9);
    }

    #[test]
    fn amplitude_scale_invariance_via_geometry() {
        use VertexKind::*;
        let base = vec![
            (0.0, 0.1, Trough),
            (0.5, 1.7, Peak),
            (1.0, 0.2, Trough),
            (1.5, 1.2, Peak),
            (2.0, 0.1, Trough),
            (2.5, 1.5, Peak),
            (3.0, 0.3, Trough),
        ];
        let scaled: Vec<_> = base.iter().map(|&(t, h, k)| (t, h * 42.0, k)).collect();
        let f1 = extract_features(&tap_geometry(&series(base)).unwrap()).unwrap();
        let f2 = extract_features(&tap_geometry(&series(scaled)).unwrap()).unwrap();
        assert_abs_diff_eq!(f1.cov_a, f2.cov_a, epsilon = 1e-12);
        assert_abs_diff_eq!(f1.doa, f2.doa, epsilon = 1e-12);
    }

    #[test]
    fn ms_at_least_m_tf() {
        let g = TapGeometry {
            peak_times: vec![0.0, 0.3, 1.1, 1.5, 2.9],
            valley_times: vec![0.1, 0.8, 1.3, 2.0],
            amplitudes: vec![1.0, 0.5, 0.8, 0.9, 0.7],
        };
        let f = extract_features(&g).unwrap();
        assert!(f.ms >= f.m_tf);
    }

    #[test]
    fn time_reversal_negates_decrements() {
        let g = TapGeometry {
            peak_times: vec![0.5, 1.0, 2.0],
            valley_times: vec![0.75, 1.5],
            amplitudes: vec![1.0, 0.9, 0.6],
        };
        let last = 2.5;
        let rev = TapGeometry {
            peak_times: g.peak_times.iter().rev().map(|t| last - t).collect(),
            valley_times: g.valley_times.iter().rev().map(|t| last - t).collect(),
            amplitudes: g.amplitudes.iter().rev().cloned().collect(),
        };
        let f1 = extract_features(&g).unwrap();
        let f2 = extract_features(&rev).unwrap();
        assert_abs_diff_eq!(f1.dos, -f2.dos, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.doa, -f2.doa, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.m_tf, f2.m_tf, epsilon = 1e-9);
        assert_eq!(f1.ttc, f2.ttc);
        assert_abs_diff_eq!(f1.ms, f2.ms, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.cov_a, f2.cov_a, epsilon = 1e-9);
        assert_abs_diff_eq!(f1.cov_tf, f2.cov_tf, epsilon = 1e-9);
    }

    #[test]
    fn non_positive_interval_errors() {
        let g = TapGeometry {
            peak_times: vec![0.5, 0.5, 1.0],
            valley_times: vec![0.25, 0.75],
            amplitudes: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(extract_features(&g), Err(Error::NonPositiveInterval { .. })));
    }

    #[test]
    fn report_serializes_with_canonical_names() {
        let g = tap_geometry(&uniform_series()).unwrap();
        let f = extract_features(&g).unwrap();
        let json = serde_json::to_value(&f).unwrap();
        for name in FEATURE_NAMES {
            assert!(json.get(name).is_some(), "missing {name}");
        }
    }
}

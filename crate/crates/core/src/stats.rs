//! Method-agreement and tracking-accuracy statistics: PCK, MPJPE, Welch's
//! t-test with a hand-rolled Student-t tail, Bland-Altman limits of
//! agreement, and a threshold agreement fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paired feature values from two measurement methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedFeatureSample {
    /// (method_a_value, method_b_value, recording_id)
    pub pairs: Vec<(f64, f64, String)>,
    pub feature_name: String,
    #[serde(default)]
    pub condition_label: String,
}

/// Predicted vs. ground-truth keypoint positions, indexed [keypoint][frame].
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointPredictionSet {
    pub predicted: Vec<Vec<(f64, f64)>>,
    pub truth: Vec<Vec<(f64, f64)>>,
}

impl KeypointPredictionSet {
    pub fn new(predicted: Vec<Vec<(f64, f64)>>, truth: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if predicted.is_empty() || predicted.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "predicted has {} keypoints, truth has {}",
                predicted.len(),
                truth.len()
            )));
        }
        for (j, (p, t)) in predicted.iter().zip(&truth).enumerate() {
            if p.is_empty() || p.len() != t.len() {
                return Err(Error::ShapeMismatch(format!(
                    "keypoint {j}: predicted has {} frames, truth has {}",
                    p.len(),
                    t.len()
                )));
            }
        }
        Ok(KeypointPredictionSet { predicted, truth })
    }

    fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.predicted.iter().zip(&self.truth).flat_map(|(pj, tj)| {
            pj.iter()
                .zip(tj)
                .map(|(&(px, py), &(tx, ty))| ((px - tx).powi(2) + (py - ty).powi(2)).sqrt())
        })
    }

    fn count(&self) -> usize {
        self.predicted.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// (mean, difference) per pair, for plotting.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub welch: WelchResult,
    pub bland_altman: BlandAltman,
    pub agreement_fraction: f64,
}

/// Fraction of keypoints whose prediction error is strictly below `t` pixels.
pub fn pck(k: &KeypointPredictionSet, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidInput(format!("PCK threshold must be positive, got {t}")));
    }
    let correct = k.errors().filter(|&e| e < t).count();
    Ok(correct as f64 / k.count() as f64)
}

/// Mean Euclidean error over all keypoints and frames.
pub fn mpjpe(k: &KeypointPredictionSet) -> f64 {
    k.errors().sum::<f64>() / k.count() as f64
}

const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Welch's unequal-variance t-test with a two-tailed p-value. Accepts the
/// no-difference hypothesis iff p > 0.05.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("each sample needs at least 2 values".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    if !(va.is_finite() && vb.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample variance".into()));
    }

    if va == 0.0 && vb == 0.0 {
        // degenerate: convention rather than NaN propagation
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df: na + nb - 2.0, p: 1.0, decision: Decision::Accept }
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            WelchResult { t, df: na + nb - 2.0, p: 0.0, decision: Decision::Reject }
        });
    }

    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = student_t_two_tailed_p(t, df);
    let decision = if p > SIGNIFICANCE_LEVEL { Decision::Accept } else { Decision::Reject };
    Ok(WelchResult { t, df, p, decision })
}

/// Two-tailed p for a Student-t statistic: P(|T| >= |t|) with `df` degrees
/// of freedom, via the regularized incomplete beta function.
pub fn student_t_two_tailed_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(0.5 * df, 0.5, x)
}

/// ln Γ(z) for z > 0 (Lanczos approximation).
pub fn ln_gamma(z: f64) -> f64 {
    const C: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut sum = 1.000000000190015;
    for (i, &c) in C.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * sum / z).ln()
}

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
/// (Lentz's method), absolute accuracy ~1e-12.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Conventional Bland-Altman bias and 1.96-SD limits of agreement.
pub fn bland_altman(s: &PairedFeatureSample) -> Result<BlandAltman> {
    if s.pairs.len() < 2 {
        return Err(Error::InvalidInput("Bland-Altman needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = s.pairs.iter().map(|(a, b, _)| a - b).collect();
    let n = diffs.len() as f64;
    let bias = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let points = s.pairs.iter().map(|(a, b, _)| ((a + b) / 2.0, a - b)).collect();
    Ok(BlandAltman { bias, loa_low: bias - 1.96 * sd, loa_high: bias + 1.96 * sd, points })
}

/// Fraction of pairs whose methods agree to within `threshold`.
pub fn agreement_fraction(s: &PairedFeatureSample, threshold: f64) -> Result<f64> {
    if threshold <= 0.0 {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
    }
    if s.pairs.is_empty() {
        return Err(Error::InvalidInput("empty paired sample".into()));
    }
    let within = s.pairs.iter().filter(|(a, b, _)| (a - b).abs() <= threshold).count();
    Ok(within as f64 / s.pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(pairs: Vec<(f64, f64)>) -> PairedFeatureSample {
        PairedFeatureSample {
            pairs: pairs.into_iter().enumerate().map(|(i, (a, b))| (a, b, format!("r{i}"))).collect(),
            feature_name: "M-TF".into(),
            condition_label: String::new(),
        }
    }

    fn preds(offsets: &[(f64, f64)]) -> KeypointPredictionSet {
        let truth: Vec<(f64, f64)> = (0..offsets.len()).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let predicted = truth
            .iter()
            .zip(offsets)
            .map(|(&(x, y), &(dx, dy))| (x + dx, y + dy))
            .collect();
        KeypointPredictionSet::new(vec![predicted], vec![truth]).unwrap()
    }

    #[test]
    fn pck_exact_predictions() {
        let k = preds(&[(0.0, 0.0); 5]);
        assert_eq!(pck(&k, 0.001).unwrap(), 1.0);
        assert_eq!(pck(&k, 100.0).unwrap(), 1.0);
    }

    #[test]
    fn pck_strict_inequality_at_boundary() {
        let k = preds(&[(3.0, 4.0); 4]);
        assert_eq!(pck(&k, 5.0).unwrap(), 0.0);
        assert_eq!(pck(&k, 6.0).unwrap(), 1.0);
    }

    #[test]
    fn pck_half_and_half() {
        let k = preds(&[(0.0, 0.0), (0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]);
        assert_eq!(pck(&k, 5.0).unwrap(), 0.5);
    }

    #[test]
    fn pck_nondecreasing_in_threshold() {
        let k = preds(&[(1.0, 0.0), (0.0, 3.0), (2.0, 2.0), (8.0, 0.0)]);
        let mut last = 0.0;
        for t in [0.5, 1.5, 3.5, 5.0, 10.0] {
            let v = pck(&k, t).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn mpjpe_cases() {
        assert_eq!(mpjpe(&preds(&[(0.0, 0.0); 3])), 0.0);
        assert_eq!(mpjpe(&preds(&[(3.0, 4.0); 3])), 5.0);
        assert_eq!(mpjpe(&preds(&[(0.0, 0.0), (10.0, 0.0)])), 5.0);
    }

    #[test]
    fn mpjpe_translation_invariant() {
        let truth = vec![vec![(0.0, 0.0), (1.0, 2.0)], vec![(5.0, 5.0), (6.0, 7.0)]];
        let predicted = vec![vec![(0.5, 0.0), (1.0, 2.5)], vec![(5.0, 6.0), (6.0, 7.0)]];
        let k1 = KeypointPredictionSet::new(predicted.clone(), truth.clone()).unwrap();
        let shift = |v: &Vec<Vec<(f64, f64)>>| {
            v.iter()
                .map(|kp| kp.iter().map(|&(x, y)| (x + 11.0, y - 4.0)).collect())
                .collect()
        };
        let k2 = KeypointPredictionSet::new(shift(&predicted), shift(&truth)).unwrap();
        assert_abs_diff_eq!(mpjpe(&k1), mpjpe(&k2), epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(KeypointPredictionSet::new(vec![vec![(0.0, 0.0)]], vec![vec![(0.0, 0.0); 2]]).is_err());
        assert!(KeypointPredictionSet::new(vec![], vec![]).is_err());
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 3.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.decision, Decision::Accept);
    }

    #[test]
    fn welch_worked_example() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert_abs_diff_eq!(r.t, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.df, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p, 0.3466, epsilon = 1e-4);
        assert_eq!(r.decision, Decision::Accept);
    }

    #[test]
    fn welch_antisymmetric() {
        let a = [1.0, 2.5, 3.0, 4.5];
        let b = [2.0, 3.0, 4.0, 5.0, 6.5];
        let r1 = welch_t_test(&a, &b).unwrap();
        let r2 = welch_t_test(&b, &a).unwrap();
        assert_abs_diff_eq!(r1.t, -r2.t, epsilon = 1e-12);
        assert_abs_diff_eq!(r1.p, r2.p, epsilon = 1e-12);
    }

    #[test]
    fn welch_degenerate_conventions() {
        let a = [2.0, 2.0, 2.0];
        let same = welch_t_test(&a, &[2.0, 2.0]).unwrap();
        assert_eq!(same.p, 1.0);
        assert_eq!(same.decision, Decision::Accept);
        let diff = welch_t_test(&a, &[3.0, 3.0]).unwrap();
        assert_eq!(diff.p, 0.0);
        assert_eq!(diff.decision, Decision::Reject);
    }

    #[test]
    fn student_t_table_spot_checks() {
        // two-tailed critical values: P(|T| >= 2.228) = 0.05 at df=10,
        // P(|T| >= 1.96) ~= 0.05 as df -> inf
        assert_abs_diff_eq!(student_t_two_tailed_p(2.228, 10.0), 0.05, epsilon = 2e-4);
        assert_abs_diff_eq!(student_t_two_tailed_p(2.086, 20.0), 0.05, epsilon = 2e-4);
        assert_abs_diff_eq!(student_t_two_tailed_p(1.96, 1e7), 0.05, epsilon = 1e-3);
        assert_abs_diff_eq!(student_t_two_tailed_p(12.706, 1.0), 0.05, epsilon = 1e-4);
    }

    #[test]
    fn bland_altman_identical() {
        let s = sample(vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let r = bland_altman(&s).unwrap();
        assert_eq!(r.bias, 0.0);
        assert_eq!(r.loa_low, 0.0);
        assert_eq!(r.loa_high, 0.0);
    }

    #[test]
    fn bland_altman_hand_example() {
        let s = sample(vec![(1.1, 1.0), (0.9, 1.0), (2.1, 2.0), (1.9, 2.0)]);
        let r = bland_altman(&s).unwrap();
        assert_abs_diff_eq!(r.bias, 0.0, epsilon = 1e-12);
        let sd = (4.0 * 0.01f64 / 3.0).sqrt(); // 0.11547
        assert_abs_diff_eq!(sd, 0.11547, epsilon = 1e-5);
        assert_abs_diff_eq!(r.loa_high, 1.96 * sd, epsilon = 1e-9);
        assert_abs_diff_eq!(r.loa_low, -1.96 * sd, epsilon = 1e-9);
        assert_abs_diff_eq!(r.loa_high, 0.22632, epsilon = 1e-4);
    }

    #[test]
    fn bland_altman_translation_shifts_bias_only() {
        let base = sample(vec![(1.0, 1.1), (2.0, 1.8), (3.0, 3.3)]);
        let shifted = sample(vec![(1.5, 1.1), (2.5, 1.8), (3.5, 3.3)]);
        let r1 = bland_altman(&base).unwrap();
        let r2 = bland_altman(&shifted).unwrap();
        assert_abs_diff_eq!(r2.bias, r1.bias + 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            r2.loa_high - r2.loa_low,
            r1.loa_high - r1.loa_low,
            epsilon = 1e-12
        );
    }

    #[test]
    fn agreement_fraction_cases() {
        let equal = sample(vec![(1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(agreement_fraction(&equal, 0.5).unwrap(), 1.0);
        let mixed = sample(vec![(1.2, 1.0), (1.6, 1.0), (1.4, 1.0)]);
        assert_abs_diff_eq!(agreement_fraction(&mixed, 0.5).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(agreement_fraction(&mixed, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn agreement_fraction_monotone_in_threshold() {
        let s = sample(vec![(1.2, 1.0), (1.6, 1.0), (1.4, 1.0), (2.5, 1.0)]);
        let mut last = 1.0;
        for t in [2.0, 0.7, 0.45, 0.25, 0.1] {
            let v = agreement_fraction(&s, t).unwrap();
            assert!(v <= last);
            last = v;
        }
    }
}

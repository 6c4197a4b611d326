use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Detection;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakConfig {
    /// Scores must exceed this to become detections.
    pub threshold: f64,
    /// Odd suppression window, centred on the candidate frame.
    pub window: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self::for_tolerances(&[0, 1, 2])
    }
}

impl PeakConfig {
    /// Threshold 0.01 and a `2 * max_tolerance + 1` window.
    pub fn for_tolerances(tolerances: &[usize]) -> Self {
        let widest = tolerances.iter().copied().max().unwrap_or(0);
        PeakConfig {
            threshold: 0.01,
            window: 2 * widest + 1,
        }
    }
}

/// Maximum of `s[t - radius .. t]` for every `t`, `-inf` where the range is empty.
fn max_before(s: &[f64], radius: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    let mut dq: VecDeque<usize> = VecDeque::new();
    for t in 0..s.len() {
        while dq.front().is_some_and(|&i| i + radius < t) {
            dq.pop_front();
        }
        out.push(dq.front().map_or(f64::NEG_INFINITY, |&i| s[i]));
        while dq.back().is_some_and(|&i| s[i] <= s[t]) {
            dq.pop_back();
        }
        dq.push_back(t);
    }
    out
}

/// Per-class local maxima of frame scores.
///
/// `scores` is `[T, K + 1]` with class 0 as background; every row must be a
/// probability vector. Frame `t` is a detection for class `k >= 1` when its
/// score exceeds the threshold, is strictly above every earlier frame in the
/// window and at least as high as every later one (plateaus resolve to their
/// first frame).
pub fn extract_peaks(scores: &Tensor, config: &PeakConfig, video: usize) -> Result<Vec<Detection>> {
    let [t, k] = <[usize; 2]>::try_from(scores.shape()).map_err(|_| {
        Error::shape("extract_peaks", format!("scores must be [T, K+1], got {:?}", scores.shape()))
    })?;
    if config.window % 2 == 0 {
        return Err(Error::invalid(
            "extract_peaks",
            format!("suppression window must be odd, got {}", config.window),
        ));
    }
    for (frame, row) in scores.data().chunks(k).enumerate() {
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::ScoreRow {
                frame,
                detail: format!("entry {v} is not a probability"),
            });
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::ScoreRow {
                frame,
                detail: format!("row sums to {total}"),
            });
        }
    }
    let radius = config.window / 2;
    let mut out = Vec::new();
    for class_id in 1..k {
        let column: Vec<f64> = (0..t).map(|i| scores.data()[i * k + class_id]).collect();
        let before = max_before(&column, radius);
        let reversed: Vec<f64> = column.iter().rev().copied().collect();
        let mut after = max_before(&reversed, radius);
        after.reverse();
        for (frame, &s) in column.iter().enumerate() {
            if s > config.threshold && before[frame] < s && after[frame] <= s {
                out.push(Detection {
                    video,
                    frame,
                    class_id,
                    confidence: s,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_class(col: &[f64]) -> Tensor {
        let data = col.iter().flat_map(|&s| [1.0 - s, s]).collect();
        Tensor::new(vec![col.len(), 2], data).unwrap()
    }

    #[test]
    fn isolated_peak() {
        let cfg = PeakConfig {
            threshold: 0.5,
            window: 3,
        };
        let d = extract_peaks(&single_class(&[0.1, 0.9, 0.1]), &cfg, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].frame, d[0].confidence), (1, 0.9));
    }

    #[test]
    fn plateau_resolves_to_first_frame() {
        let cfg = PeakConfig {
            threshold: 0.5,
            window: 3,
        };
        let d = extract_peaks(&single_class(&[0.9, 0.9]), &cfg, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].frame, 0);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let cfg = PeakConfig::default();
        let bad = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.7, 0.7]).unwrap();
        assert!(matches!(
            extract_peaks(&bad, &cfg, 0),
            Err(Error::ScoreRow { frame: 1, .. })
        ));
        let neg = Tensor::new(vec![1, 2], vec![1.5, -0.5]).unwrap();
        assert!(extract_peaks(&neg, &cfg, 0).is_err());
        let even = PeakConfig {
            threshold: 0.0,
            window: 4,
        };
        assert!(extract_peaks(&single_class(&[0.2]), &even, 0).is_err());
    }

    #[test]
    fn default_window_covers_widest_tolerance() {
        assert_eq!(PeakConfig::default().window, 5);
        assert_eq!(PeakConfig::for_tolerances(&[1]).window, 3);
    }
}

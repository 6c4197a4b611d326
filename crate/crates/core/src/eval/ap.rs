use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{Detection, EventAnnotation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAp {
    pub class_id: usize,
    pub num_gt: usize,
    pub num_det: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Detections of one class in evaluation order: confidence descending, then
/// video and frame ascending.
fn ranked(detections: &[Detection], class_id: usize) -> Vec<Detection> {
    let mut d: Vec<Detection> = detections
        .iter()
        .filter(|d| d.class_id == class_id)
        .copied()
        .collect();
    d.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
            .then(a.video.cmp(&b.video))
            .then(a.frame.cmp(&b.frame))
    });
    d
}

/// Greedy matching in confidence order. Each detection claims the nearest
/// unmatched same-class ground truth within `tolerance` frames (earlier frame
/// on ties). Returns the true-positive flag of each ranked detection and the
/// number of ground-truth events of the class.
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &[EventAnnotation],
    class_id: usize,
    tolerance: usize,
) -> (Vec<bool>, usize) {
    let mut gts: Vec<EventAnnotation> = ground_truth
        .iter()
        .filter(|g| g.class_id == class_id)
        .copied()
        .collect();
    gts.sort();
    let mut taken = vec![false; gts.len()];
    let flags = ranked(detections, class_id)
        .iter()
        .map(|det| {
            // Ground truth of the detection's video within the tolerance window.
            let lo = gts.partition_point(|g| {
                (g.video, g.frame) < (det.video, det.frame.saturating_sub(tolerance))
            });
            let best = gts[lo..]
                .iter()
                .enumerate()
                .take_while(|(_, g)| g.video == det.video && g.frame <= det.frame + tolerance)
                .filter(|(i, _)| !taken[lo + i])
                .min_by_key(|(_, g)| (g.frame.abs_diff(det.frame), g.frame))
                .map(|(i, _)| lo + i);
            match best {
                Some(i) => {
                    taken[i] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (flags, gts.len())
}

/// Interpolated precision at every rank: `max` of precision at this or any later rank.
fn interpolated_precision(flags: &[bool]) -> Vec<f64> {
    let mut tp = 0usize;
    let mut prec: Vec<f64> = flags
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    prec
}

fn class_ap(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let interp = interpolated_precision(flags);
    let total: f64 = flags
        .iter()
        .zip(&interp)
        .filter(|(&hit, _)| hit)
        .fold(0.0, |acc, (_, &p)| acc + p);
    Some(total / num_gt as f64)
}

fn classes(detections: &[Detection], ground_truth: &[EventAnnotation]) -> BTreeSet<usize> {
    ground_truth
        .iter()
        .map(|g| g.class_id)
        .chain(detections.iter().map(|d| d.class_id))
        .collect()
}

/// All-point interpolated AP for every class seen in either input.
pub fn match_and_ap(
    detections: &[Detection],
    ground_truth: &[EventAnnotation],
    tolerance: usize,
) -> Vec<ClassAp> {
    classes(detections, ground_truth)
        .into_iter()
        .map(|class_id| {
            let (flags, num_gt) = match_detections(detections, ground_truth, class_id, tolerance);
            ClassAp {
                class_id,
                num_gt,
                num_det: flags.len(),
                ap: class_ap(&flags, num_gt),
            }
        })
        .collect()
}

/// Mean AP over classes with at least one ground-truth event.
pub fn map_at(
    detections: &[Detection],
    ground_truth: &[EventAnnotation],
    tolerance: usize,
) -> Result<f64> {
    let aps: Vec<f64> = match_and_ap(detections, ground_truth, tolerance)
        .into_iter()
        .filter_map(|c| c.ap)
        .collect();
    if aps.is_empty() {
        return Err(Error::invalid("map_at", "no class has ground-truth events"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Interpolated PR curve of one class: a point at each recall step, with
/// runs of equal precision collapsed to their last point. The area
/// `sum (r_i - r_{i-1}) * p_i` equals the class AP.
pub fn pr_curve(
    detections: &[Detection],
    ground_truth: &[EventAnnotation],
    class_id: usize,
    tolerance: usize,
) -> Vec<PrPoint> {
    let (flags, num_gt) = match_detections(detections, ground_truth, class_id, tolerance);
    if num_gt == 0 {
        return Vec::new();
    }
    let interp = interpolated_precision(&flags);
    let mut tp = 0usize;
    let mut points: Vec<PrPoint> = Vec::new();
    for (&hit, &p) in flags.iter().zip(&interp) {
        if !hit {
            continue;
        }
        tp += 1;
        let point = PrPoint {
            recall: tp as f64 / num_gt as f64,
            precision: p,
        };
        match points.last_mut() {
            Some(last) if last.precision == p => *last = point,
            _ => points.push(point),
        }
    }
    points
}

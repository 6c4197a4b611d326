//! Precise event spotting evaluation: peak extraction, tolerance matching,
//! average precision, PR curves, and event density.

mod ap;
mod density;
mod io;
mod peaks;

pub use ap::{map_at, match_and_ap, match_detections, pr_curve, ClassAp, PrPoint};
pub use density::event_density;
pub use io::{read_detections_csv, write_detections_csv, write_pr_curves_csv, DetectionRecord};
pub use peaks::{extract_peaks, PeakConfig};

use serde::Serialize;

use crate::error::Result;

/// A ground-truth event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EventAnnotation {
    pub video: usize,
    pub frame: usize,
    /// In `1..=K`; 0 is reserved for background.
    pub class_id: usize,
}

/// A scored prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub video: usize,
    pub frame: usize,
    pub class_id: usize,
    pub confidence: f64,
}

/// Per-class results at one tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToleranceReport {
    pub tolerance: usize,
    pub map: f64,
    pub per_class: Vec<ClassAp>,
    pub curves: Vec<(usize, Vec<PrPoint>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub tolerances: Vec<ToleranceReport>,
}

impl EvalReport {
    pub fn map_at(&self, tolerance: usize) -> Option<f64> {
        self.tolerances
            .iter()
            .find(|r| r.tolerance == tolerance)
            .map(|r| r.map)
    }

    /// `{"mAP@d": .., "per_class": {name: {"AP@d": ..}}}` with `null` for
    /// classes that have no ground truth.
    pub fn to_json(&self, class_names: &[String]) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let mut root = Map::new();
        for r in &self.tolerances {
            root.insert(format!("mAP@{}", r.tolerance), json!(r.map));
        }
        let mut classes = Map::new();
        for (i, name) in class_names.iter().enumerate() {
            let mut entry = Map::new();
            for r in &self.tolerances {
                let ap = r
                    .per_class
                    .iter()
                    .find(|c| c.class_id == i + 1)
                    .and_then(|c| c.ap);
                entry.insert(format!("AP@{}", r.tolerance), ap.map_or(Value::Null, |v| json!(v)));
            }
            classes.insert(name.clone(), Value::Object(entry));
        }
        root.insert("per_class".into(), Value::Object(classes));
        Value::Object(root)
    }
}

/// Scores pooled detections against pooled ground truth at every tolerance.
pub fn evaluate(
    detections: &[Detection],
    ground_truth: &[EventAnnotation],
    tolerances: &[usize],
) -> Result<EvalReport> {
    let mut out = Vec::with_capacity(tolerances.len());
    for &tol in tolerances {
        let per_class = match_and_ap(detections, ground_truth, tol);
        let map = map_at(detections, ground_truth, tol)?;
        let curves = per_class
            .iter()
            .filter(|c| c.num_gt > 0)
            .map(|c| (c.class_id, pr_curve(detections, ground_truth, c.class_id, tol)))
            .collect();
        out.push(ToleranceReport {
            tolerance: tol,
            map,
            per_class,
            curves,
        });
    }
    Ok(EvalReport { tolerances: out })
}

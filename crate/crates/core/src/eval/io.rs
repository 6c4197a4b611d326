use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PrPoint;

/// One row of a detections CSV: `video_id,frame,class,confidence`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame: usize,
    pub class: String,
    pub confidence: f64,
}

pub fn read_detections_csv<R: Read>(reader: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let rec: DetectionRecord = row?;
        if !rec.confidence.is_finite() {
            return Err(Error::Format(format!(
                "detection row {}: confidence {} is not finite",
                i + 1,
                rec.confidence
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_detections_csv<W: Write>(writer: W, records: &[DetectionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if records.is_empty() {
        wtr.write_record(["video_id", "frame", "class", "confidence"])?;
    }
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// `class,recall,precision` rows, one block per named class.
pub fn write_pr_curves_csv<W: Write>(writer: W, curves: &[(String, Vec<PrPoint>)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["class", "recall", "precision"])?;
    for (name, points) in curves {
        for p in points {
            wtr.write_record([name.clone(), p.recall.to_string(), p.precision.to_string()])?;
        }
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

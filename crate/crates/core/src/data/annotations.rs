use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EventAnnotation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledFrame {
    pub frame: usize,
    pub label: String,
}

/// Frame-accurate event labels of one video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub video_id: String,
    pub num_frames: usize,
    pub fps: u32,
    pub classes: Vec<String>,
    pub events: Vec<LabeledFrame>,
}

impl AnnotationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: AnnotationFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let record = |what: String| format!("{}: {what}", self.video_id);
        if self.num_frames == 0 {
            return Err(Error::Annotation {
                record: record("num_frames".into()),
                detail: "a video needs at least one frame".into(),
            });
        }
        for (i, name) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(name) {
                return Err(Error::Annotation {
                    record: record(format!("classes[{i}]")),
                    detail: format!("duplicate class `{name}`"),
                });
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.frame >= self.num_frames {
                return Err(Error::Annotation {
                    record: record(format!("events[{i}]")),
                    detail: format!("frame {} outside [0, {})", e.frame, self.num_frames),
                });
            }
            if self.class_id(&e.label).is_none() {
                return Err(Error::Annotation {
                    record: record(format!("events[{i}]")),
                    detail: format!("unknown class `{}`", e.label),
                });
            }
        }
        Ok(())
    }

    /// 1-based index into the vocabulary; 0 is background.
    pub fn class_id(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label).map(|i| i + 1)
    }

    /// Events tagged with `video` for pooled evaluation.
    pub fn event_annotations(&self, video: usize) -> Vec<EventAnnotation> {
        self.events
            .iter()
            .map(|e| EventAnnotation {
                video,
                frame: e.frame,
                class_id: self.class_id(&e.label).expect("validated label"),
            })
            .collect()
    }

    /// Dense per-frame class ids, 0 where nothing happens.
    pub fn frame_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.num_frames];
        for e in &self.events {
            labels[e.frame] = self.class_id(&e.label).expect("validated label");
        }
        labels
    }

    pub fn event_frames(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.frame).collect()
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnnotationFile::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Annotation {
            record: path.display().to_string(),
            detail: j.to_string(),
        },
        other => other,
    })
}

pub fn save_annotations(file: &AnnotationFile, path: &Path) -> Result<()> {
    fs::write(path, file.to_json()?).map_err(|e| Error::io(path, e))
}

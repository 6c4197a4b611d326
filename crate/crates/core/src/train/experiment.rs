//! Experiment configuration as JSON with flat dotted keys, e.g.
//! `{"model.dilations": [1, 2, 3], "optim.total_epochs": 20}`.
//!
//! Every key is optional; the defaults reproduce the dilated-cue benchmark.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{
    cue_dataset, load_annotations, load_clip, synth_bounce, SynthConfig, Video,
};
use crate::error::{Error, Result};
use crate::temporal::TSM_DEFAULT_FRACTION;

use super::{train_with_progress, EpochMetrics, LossConfig, OptimConfig, TemporalBlock, ToyModelConfig, TrainData, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    None,
    Tsm,
    Gsm,
    Msagsm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub block: BlockKind,
    pub width: usize,
    pub depth: usize,
    /// Spatial kernel of the per-stage convolution; 1 keeps all temporal mixing in the blocks.
    pub kernel: usize,
    pub heads: usize,
    pub dilations: Vec<usize>,
    pub tsm_fraction: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            block: BlockKind::Msagsm,
            width: 8,
            depth: 1,
            kernel: 1,
            heads: 2,
            dilations: vec![1, 2, 3],
            tsm_fraction: TSM_DEFAULT_FRACTION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    DilatedCue,
    Bounce,
    /// A directory of `<name>.clip` caches with matching `<name>.json` annotations.
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub train_videos: usize,
    pub val_videos: usize,
    /// Clip length for cached videos; synthetic clips use `synth.length`.
    pub clip_length: Option<usize>,
    pub synth: SynthConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::DilatedCue,
            path: None,
            val_path: None,
            train_videos: 1024,
            val_videos: 64,
            clip_length: None,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub data: DataSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSection::default(),
            optim: OptimConfig {
                base_lr: 3e-2,
                total_epochs: 20,
                ..OptimConfig::default()
            },
            loss: LossConfig::default(),
            data: DataSection::default(),
        }
    }
}

fn insert_path(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        if parts.peek().is_none() {
            node.insert(part.to_string(), value);
            return Ok(());
        }
        let child = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        node = child
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    Ok(())
}

fn flatten_into(prefix: &str, value: Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other)),
    }
}

impl ExperimentConfig {
    /// Applies dotted-key overrides one at a time so a bad key is reported by name.
    pub fn with_overrides(&self, entries: &[(String, Value)]) -> Result<Self> {
        let mut root = match serde_json::to_value(self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serialises to an object"),
        };
        for (key, value) in entries {
            insert_path(&mut root, key, value.clone())?;
            serde_json::from_value::<ExperimentConfig>(Value::Object(root.clone()))
                .map_err(|e| Error::config(key.clone(), e.to_string()))?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(Value::Object(root))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file body; nested objects are accepted as well as dotted keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        if !value.is_object() {
            return Err(Error::config("<file>", "top level must be an object"));
        }
        let mut entries = Vec::new();
        flatten_into("", value, &mut entries);
        Self::default().with_overrides(&entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Flat `key -> value` form, the same shape the loader accepts.
    pub fn to_flat_json(&self) -> Result<String> {
        let mut entries = Vec::new();
        flatten_into("", serde_json::to_value(self)?, &mut entries);
        let map: Map<String, Value> = entries.into_iter().collect();
        Ok(serde_json::to_string_pretty(&Value::Object(map))?)
    }

    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        self.loss.validate()?;
        self.model_config(1)?.validate()?;
        match self.data.source {
            DataSource::Cache if self.data.path.is_none() => {
                Err(Error::config("data.path", "required when data.source is cache"))
            }
            DataSource::DilatedCue | DataSource::Bounce if self.data.train_videos == 0 => {
                Err(Error::config("data.train_videos", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn temporal_block(&self) -> TemporalBlock {
        let m = &self.model;
        match m.block {
            BlockKind::None => TemporalBlock::None,
            BlockKind::Tsm => TemporalBlock::Tsm { fraction: m.tsm_fraction },
            BlockKind::Gsm => TemporalBlock::Gsm,
            BlockKind::Msagsm => TemporalBlock::Msagsm {
                heads: m.heads,
                dilations: m.dilations.clone(),
            },
        }
    }

    pub fn model_config(&self, num_classes: usize) -> Result<ToyModelConfig> {
        let m = &self.model;
        if m.depth == 0 {
            return Err(Error::config("model.depth", "must be positive"));
        }
        let mut cfg = ToyModelConfig::benchmark(3, m.width, m.depth, num_classes, self.temporal_block());
        for s in &mut cfg.stages {
            s.kernel = m.kernel;
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { field, detail } => Error::Config {
                field: field.replace("model.stages[0]", "model"),
                detail,
            },
            other => other,
        })?;
        Ok(cfg)
    }
}

/// Loaded data plus the class vocabulary it uses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub data: TrainData,
    pub class_names: Vec<String>,
}

fn load_cache_dir(dir: &Path) -> Result<(Vec<Video>, Vec<String>)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Format(format!("{} holds no annotation files", dir.display())));
    }
    let mut classes: Option<Vec<String>> = None;
    let mut videos = Vec::with_capacity(names.len());
    for ann_path in names {
        let ann = load_annotations(&ann_path)?;
        match &classes {
            None => classes = Some(ann.classes.clone()),
            Some(c) if *c != ann.classes => {
                return Err(Error::Annotation {
                    record: ann_path.display().to_string(),
                    detail: "class vocabulary differs from the other files".into(),
                })
            }
            Some(_) => {}
        }
        let clip = load_clip(&ann_path.with_extension("clip"))?;
        if clip.shape()[0] != 3 || clip.shape()[1] != ann.num_frames {
            return Err(Error::Format(format!(
                "{}: clip {:?} does not match {} frames of 3 channels",
                ann_path.display(),
                clip.shape(),
                ann.num_frames
            )));
        }
        videos.push(Video::new(clip, ann.frame_labels())?);
    }
    Ok((videos, classes.unwrap_or_default()))
}

fn bounce_videos(synth: &SynthConfig, count: usize, stream: u64) -> Result<Vec<Video>> {
    (0..count as u64)
        .map(|i| {
            let cfg = SynthConfig {
                seed: synth.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream << 32 | i),
                ..synth.clone()
            };
            Ok(synth_bounce(&cfg)?.into_video())
        })
        .collect()
}

const VAL_SEED_SALT: u64 = 0x5eed;

impl ExperimentConfig {
    /// Builds train and validation sets; synthetic data is derived from `seed`.
    pub fn load_dataset(&self, seed: u64) -> Result<Dataset> {
        let d = &self.data;
        let synth = SynthConfig {
            seed,
            ..d.synth.clone()
        };
        let val_synth = SynthConfig {
            seed: seed ^ VAL_SEED_SALT,
            ..d.synth.clone()
        };
        match d.source {
            DataSource::DilatedCue => Ok(Dataset {
                data: TrainData {
                    train: cue_dataset(&synth, d.train_videos)?,
                    val: cue_dataset(&val_synth, d.val_videos)?,
                    clip_length: synth.length,
                },
                class_names: (1..=synth.num_classes).map(|k| format!("cue{k}")).collect(),
            }),
            DataSource::Bounce => Ok(Dataset {
                data: TrainData {
                    train: bounce_videos(&synth, d.train_videos, 0)?,
                    val: bounce_videos(&synth, d.val_videos, 1)?,
                    clip_length: synth.length,
                },
                class_names: vec!["bounce".into()],
            }),
            DataSource::Cache => {
                let path = d.path.as_deref().expect("validated");
                let (train, classes) = load_cache_dir(path)?;
                let val = match &d.val_path {
                    Some(p) => {
                        let (val, val_classes) = load_cache_dir(p)?;
                        if val_classes != classes {
                            return Err(Error::config("data.val_path", "class vocabulary differs from data.path"));
                        }
                        val
                    }
                    None => Vec::new(),
                };
                let clip_length = d
                    .clip_length
                    .unwrap_or_else(|| train.iter().map(Video::num_frames).min().unwrap_or(0));
                Ok(Dataset {
                    data: TrainData { train, val, clip_length },
                    class_names: classes,
                })
            }
        }
    }

    /// Loads data, builds the model and trains it.
    pub fn run(
        &self,
        seed: u64,
        on_epoch: impl FnMut(&EpochMetrics),
    ) -> Result<(ToyModelConfig, Dataset, TrainOutcome)> {
        let dataset = self.load_dataset(seed)?;
        let model = self.model_config(dataset.class_names.len())?;
        let outcome = train_with_progress(&model, &self.optim, &self.loss, &dataset.data, seed, on_epoch)?;
        Ok((model, dataset, outcome))
    }
}

//! Per-frame toy classifier, weighted cross-entropy, AdamW with warm-up and
//! cosine decay, and a deterministic single-threaded training loop.

mod experiment;
mod model;
mod optim;

pub use experiment::{BlockKind, DataSection, DataSource, Dataset, ExperimentConfig, ModelSection};

pub use model::{
    model_forward, predict, BlockParams, StageConfig, StageParams, TemporalBlock, ToyModelConfig,
    ToyParams,
};
pub use optim::{adamw_step, lr_at, AdamState, OptimConfig};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_clips, SampleMode, Video};
use crate::error::{Error, Result};
use crate::eval::{evaluate, extract_peaks, EvalReport, EventAnnotation, PeakConfig};
use crate::temporal::ParamTree;
use crate::tensor::{Graph, Tensor};

/// Tolerances reported during validation.
pub const VAL_TOLERANCES: [usize; 2] = [1, 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Multiplier on frames whose label is not background.
    pub positive_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { positive_weight: 5.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_weight.is_finite() && self.positive_weight >= 1.0) {
            return Err(Error::config(
                "loss.positive_weight",
                format!("must be >= 1, got {}", self.positive_weight),
            ));
        }
        Ok(())
    }

    pub fn frame_weights(&self, labels: &[usize]) -> Vec<f64> {
        labels
            .iter()
            .map(|&l| if l == 0 { 1.0 } else { self.positive_weight })
            .collect()
    }
}

/// Loss value and its gradient with respect to `logits` (`[T, K + 1]`).
pub fn weighted_ce_loss(logits: &Tensor, labels: &[usize], positive_weight: f64) -> Result<(f64, Tensor)> {
    let cfg = LossConfig { positive_weight };
    cfg.validate()?;
    let mut g = Graph::new();
    let x = g.leaf(logits.clone());
    let loss = g.weighted_cross_entropy(x, labels, &cfg.frame_weights(labels))?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).data()[0], grads.get_or_zeros(x, logits)))
}

/// Mean loss of one clip and the gradient of every parameter in visiting order.
pub fn clip_loss_and_grads(
    cfg: &ToyModelConfig,
    params: &ToyParams,
    loss: &LossConfig,
    clip: &Video,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let x = g.constant(clip.clip.clone());
    let bound = params.bind(&mut g);
    let logits = model_forward(&mut g, cfg, &bound, x)?;
    let l = g.weighted_cross_entropy(logits, &clip.labels, &loss.frame_weights(&clip.labels))?;
    let grads = g.backward(l)?;
    let mut like = Vec::new();
    params.visit("", &mut |_, t| like.push(t));
    let out = bound
        .vars()
        .into_iter()
        .zip(like)
        .map(|(v, t)| grads.get_or_zeros(v, t))
        .collect();
    Ok((g.value(l).data()[0], out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub train: Vec<Video>,
    pub val: Vec<Video>,
    pub clip_length: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Rate of the last update in the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_map1: f64,
    pub val_map2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ToyParams,
    pub log: Vec<EpochMetrics>,
}

fn flatten(params: &ToyParams) -> Vec<Tensor> {
    let mut out = Vec::new();
    params.visit("", &mut |_, t| out.push(t.clone()));
    out
}

fn unflatten(params: &mut ToyParams, flat: Vec<Tensor>) {
    let mut it = flat.into_iter();
    params.visit_mut("", &mut |_, t| *t = it.next().expect("same tree"));
}

/// Runs the model on every video and scores peak detections at `tolerances`.
pub fn evaluate_model(
    cfg: &ToyModelConfig,
    params: &ToyParams,
    videos: &[Video],
    tolerances: &[usize],
) -> Result<EvalReport> {
    let peaks = PeakConfig::for_tolerances(tolerances);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for (i, v) in videos.iter().enumerate() {
        let scores = predict(cfg, params, &v.clip)?;
        dets.extend(extract_peaks(&scores, &peaks, i)?);
        gts.extend(v.labels.iter().enumerate().filter(|(_, &l)| l > 0).map(|(f, &l)| {
            EventAnnotation {
                video: i,
                frame: f,
                class_id: l,
            }
        }));
    }
    evaluate(&dets, &gts, tolerances)
}

fn validation_maps(cfg: &ToyModelConfig, params: &ToyParams, val: &[Video]) -> Result<(f64, f64)> {
    if val.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let report = evaluate_model(cfg, params, val, &VAL_TOLERANCES)?;
    let get = |t| report.map_at(t).unwrap_or(f64::NAN);
    Ok((get(1), get(2)))
}

/// Trains from a seeded initialisation. Update `i` (0-based) uses `lr_at(i + 1)`.
pub fn train(
    model: &ToyModelConfig,
    optim: &OptimConfig,
    loss: &LossConfig,
    data: &TrainData,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with_progress(model, optim, loss, data, seed, |_| {})
}

pub fn train_with_progress(
    model: &ToyModelConfig,
    optim: &OptimConfig,
    loss: &LossConfig,
    data: &TrainData,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    model.validate()?;
    optim.validate()?;
    loss.validate()?;
    if data.train.is_empty() {
        return Err(Error::invalid("train", "training set is empty"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ToyParams::init(model, &mut init_rng)?;
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(seed);
    sampler_rng.set_stream(1);

    let spe = optim.steps_per_epoch();
    let mut state = AdamState::zeros_like(&flatten(&params));
    let mut step = 0usize;
    let mut log = Vec::with_capacity(optim.total_epochs);
    for epoch in 1..=optim.total_epochs {
        let mode = SampleMode::Random {
            seed: sampler_rng.random(),
            count: spe * optim.batch_size,
        };
        let clips: Vec<Video> = sample_clips(&data.train, data.clip_length, mode)?
            .map(|c| c.map(|c| c.data))
            .collect::<Result<_>>()?;
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in clips.chunks(optim.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for clip in batch {
                let (l, grads) = clip_loss_and_grads(model, &params, loss, clip)?;
                loss_sum += l;
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        for (x, g) in a.iter_mut().zip(&grads) {
                            x.data_mut().iter_mut().zip(g.data()).for_each(|(x, g)| *x += g);
                        }
                        a
                    }
                });
            }
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<Tensor> = acc
                .expect("non-empty batch")
                .into_iter()
                .map(|g| g.map(|v| v * scale))
                .collect();
            step += 1;
            lr = lr_at(step, spe, optim);
            let mut flat = flatten(&params);
            adamw_step(&mut flat, &grads, &mut state, step, lr, optim)?;
            unflatten(&mut params, flat);
        }
        let (val_map1, val_map2) = validation_maps(model, &params, &data.val)?;
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / clips.len() as f64,
            val_map1,
            val_map2,
        };
        on_epoch(&m);
        log.push(m);
    }
    Ok(TrainOutcome { params, log })
}

/// `epoch,lr,train_loss,val_mAP@1,val_mAP@2`.
pub fn write_metrics_csv<W: Write>(writer: W, log: &[EpochMetrics]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["epoch", "lr", "train_loss", "val_mAP@1", "val_mAP@2"])?;
    for m in log {
        wtr.write_record([
            m.epoch.to_string(),
            m.lr.to_string(),
            m.train_loss.to_string(),
            m.val_map1.to_string(),
            m.val_map2.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

//! Annotation files, synthetic videos, clip sampling and the clip cache format.

mod annotations;
mod synth;

pub use annotations::{load_annotations, save_annotations, AnnotationFile, LabeledFrame};
pub use synth::{
    cue_dataset, cue_scene, labels_from_trajectory, render_bounce, render_cue, simulate_bounce,
    synth_bounce, synth_dilated_cue, CueScene, DotState, SynthClip, SynthConfig, DEFAULT_PALETTE,
};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A labelled video: `[C, T, H, W]` pixels and one class id per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub clip: Tensor,
    pub labels: Vec<usize>,
}

impl Video {
    pub fn new(clip: Tensor, labels: Vec<usize>) -> Result<Self> {
        if clip.rank() != 4 || clip.shape()[1] != labels.len() {
            return Err(Error::shape(
                "video",
                format!("clip {:?} with {} labels", clip.shape(), labels.len()),
            ));
        }
        Ok(Video { clip, labels })
    }

    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }

    /// Frames `start..start + len` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Video> {
        let [c, t, h, w] = <[usize; 4]>::try_from(self.clip.shape())
            .map_err(|_| Error::shape("video", "clip must be rank 4"))?;
        if len == 0 || start + len > t {
            return Err(Error::invalid(
                "slice",
                format!("frames {start}..{} outside a {t}-frame video", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(c * len * plane);
        for ch in 0..c {
            let base = (ch * t + start) * plane;
            data.extend_from_slice(&self.clip.data()[base..base + len * plane]);
        }
        Ok(Video {
            clip: Tensor::new(vec![c, len, h, w], data)?,
            labels: self.labels[start..start + len].to_vec(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Non-overlapping tiles with stride `L`; a short tail is dropped.
    Sequential,
    /// `count` clips at uniform random starts.
    Random { seed: u64, count: usize },
}

/// A window of a dataset video.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub video: usize,
    /// Absolute frame of local index 0.
    pub start: usize,
    pub data: Video,
}

/// Lazily cuts clips of `length` frames out of `videos`.
pub fn sample_clips(
    videos: &[Video],
    length: usize,
    mode: SampleMode,
) -> Result<impl Iterator<Item = Result<Clip>> + '_> {
    if length == 0 {
        return Err(Error::invalid("sample_clips", "clip length must be positive"));
    }
    if let Some((i, v)) = videos.iter().enumerate().find(|(_, v)| v.num_frames() < length) {
        return Err(Error::invalid(
            "sample_clips",
            format!("clip length {length} exceeds video {i} with {} frames", v.num_frames()),
        ));
    }
    let positions: Vec<(usize, usize)> = match mode {
        SampleMode::Sequential => videos
            .iter()
            .enumerate()
            .flat_map(|(i, v)| (0..v.num_frames() / length).map(move |k| (i, k * length)))
            .collect(),
        SampleMode::Random { seed, count } => {
            if videos.is_empty() && count > 0 {
                return Err(Error::invalid("sample_clips", "no videos to sample from"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let i = rng.random_range(0..videos.len());
                    (i, rng.random_range(0..=videos[i].num_frames() - length))
                })
                .collect()
        }
    };
    Ok(positions.into_iter().map(move |(video, start)| {
        Ok(Clip {
            video,
            start,
            data: videos[video].slice(start, length)?,
        })
    }))
}

const CACHE_HEADER: usize = 16;

/// `[C, T, H, W]` as four little-endian `u32`, then `f32` little-endian values.
pub fn clip_to_bytes(clip: &Tensor) -> Result<Vec<u8>> {
    if clip.rank() != 4 {
        return Err(Error::shape("clip_cache", format!("clip must be rank 4, got {:?}", clip.shape())));
    }
    let mut out = Vec::with_capacity(CACHE_HEADER + 4 * clip.len());
    for &d in clip.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in clip.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn clip_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < CACHE_HEADER {
        return Err(Error::Format(format!("clip cache too short: {} bytes", bytes.len())));
    }
    let shape: Vec<usize> = bytes[..CACHE_HEADER]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte chunk")) as usize)
        .collect();
    let body = &bytes[CACHE_HEADER..];
    let n: usize = shape.iter().product();
    if body.len() != 4 * n {
        return Err(Error::Format(format!(
            "clip cache header {shape:?} needs {} data bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64)
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_clip(clip: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, clip_to_bytes(clip)?).map_err(|e| Error::io(path, e))
}

pub fn load_clip(path: &Path) -> Result<Tensor> {
    clip_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

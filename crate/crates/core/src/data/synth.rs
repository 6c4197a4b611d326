//! Synthetic clip generators.
//!
//! Both generators split into a scene (trajectories, event times, classes)
//! drawn from seeded random streams and a pure renderer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Video;

/// Corner-marker colours; class `k` uses entry `k - 1`.
pub const DEFAULT_PALETTE: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
];

const DISTRACTOR_BRIGHTNESS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Clip length `L` in frames.
    pub length: usize,
    pub num_classes: usize,
    /// Frames between a cue and its event.
    pub cue_separation: usize,
    /// Upper bound on each velocity component, pixels per frame.
    pub max_speed: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 8,
            width: 8,
            length: 32,
            num_classes: 4,
            cue_separation: 3,
            max_speed: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return Err(Error::config(
                "synth.height/width",
                format!("world must be at least 4x4, got {}x{}", self.height, self.width),
            ));
        }
        if self.length == 0 {
            return Err(Error::config("synth.length", "must be positive"));
        }
        if !(self.max_speed.is_finite() && self.max_speed >= 0.0) {
            return Err(Error::config("synth.max_speed", "must be finite and non-negative"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("synth.num_classes", "must be positive"));
        }
        Ok(())
    }

    fn validate_cue(&self) -> Result<()> {
        self.validate()?;
        let k = self.cue_separation;
        if k < 2 || k >= self.length {
            return Err(Error::config(
                "synth.cue_separation",
                format!("needs 2 <= k < L = {}, got {k}", self.length),
            ));
        }
        if self.num_classes > DEFAULT_PALETTE.len() {
            return Err(Error::config(
                "synth.num_classes",
                format!("at most {} cue colours are available", DEFAULT_PALETTE.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DotState {
    pub y: f64,
    pub x: f64,
    pub vy: f64,
    pub vx: f64,
}

/// One clip with labels and the trajectory they were read from.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthClip {
    /// `[3, L, H, W]`.
    pub clip: Tensor,
    /// Class id per frame, 0 for background.
    pub labels: Vec<usize>,
    pub trajectory: Vec<DotState>,
}

impl SynthClip {
    pub fn into_video(self) -> Video {
        Video {
            clip: self.clip,
            labels: self.labels,
        }
    }
}

fn reflect(p: &mut f64, v: &mut f64, max: f64) {
    loop {
        if *p > max {
            *p = 2.0 * max - *p;
        } else if *p < 0.0 {
            *p = -*p;
        } else {
            return;
        }
        *v = -*v;
    }
}

/// Ballistic motion inside `[0, height-1] x [0, width-1]` with reflecting walls.
pub fn simulate_bounce(start: DotState, frames: usize, height: usize, width: usize) -> Vec<DotState> {
    let (ymax, xmax) = ((height - 1) as f64, (width - 1) as f64);
    let mut s = start;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        if t > 0 {
            s.y += s.vy;
            s.x += s.vx;
            reflect(&mut s.y, &mut s.vy, ymax);
            reflect(&mut s.x, &mut s.vx, xmax);
        }
        out.push(s);
    }
    out
}

/// Class 1 wherever the vertical velocity changes sign relative to the previous frame.
pub fn labels_from_trajectory(trajectory: &[DotState]) -> Vec<usize> {
    let mut labels = vec![0; trajectory.len()];
    for t in 1..trajectory.len() {
        let (a, b) = (trajectory[t - 1].vy, trajectory[t].vy);
        if a * b < 0.0 {
            labels[t] = 1;
        }
    }
    labels
}

fn coverage(pixel: usize, centre: f64) -> f64 {
    let p = pixel as f64;
    ((p + 0.5).min(centre + 1.0) - (p - 0.5).max(centre - 1.0)).clamp(0.0, 1.0)
}

fn paint(clip: &mut Tensor, frame: usize, y: usize, x: usize, rgb: [f64; 3]) {
    for (c, &v) in rgb.iter().enumerate() {
        let cur = clip.at(&[c, frame, y, x]);
        clip.set(&[c, frame, y, x], cur.max(v));
    }
}

/// Anti-aliased 2x2 box dot.
fn draw_dot(clip: &mut Tensor, frame: usize, s: &DotState, brightness: f64) {
    let (h, w) = (clip.shape()[2], clip.shape()[3]);
    for y in 0..h {
        let cy = coverage(y, s.y);
        if cy == 0.0 {
            continue;
        }
        for x in 0..w {
            let a = cy * coverage(x, s.x) * brightness;
            if a > 0.0 {
                paint(clip, frame, y, x, [a; 3]);
            }
        }
    }
}

fn draw_block(clip: &mut Tensor, frame: usize, y0: usize, x0: usize, rgb: [f64; 3]) {
    for y in y0..y0 + 2 {
        for x in x0..x0 + 2 {
            paint(clip, frame, y, x, rgb);
        }
    }
}

fn random_dot(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> DotState {
    let s = cfg.max_speed;
    let mut vel = || if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
    let (vy, vx) = (vel(), vel());
    DotState {
        y: rng.random_range(0.0..=(cfg.height - 1) as f64),
        x: rng.random_range(0.0..=(cfg.width - 1) as f64),
        vy,
        vx,
    }
}

fn render_trajectory(cfg: &SynthConfig, trajectory: &[DotState], brightness: f64) -> Tensor {
    let mut clip = Tensor::zeros(&[3, cfg.length, cfg.height, cfg.width]);
    for (t, s) in trajectory.iter().enumerate() {
        draw_dot(&mut clip, t, s, brightness);
    }
    clip
}

/// A white dot bouncing off the walls; frames where it reverses vertically are events.
pub fn synth_bounce(cfg: &SynthConfig) -> Result<SynthClip> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = random_dot(&mut rng, cfg);
    Ok(render_bounce(cfg, start))
}

/// Deterministic bounce clip from a given initial state.
pub fn render_bounce(cfg: &SynthConfig, start: DotState) -> SynthClip {
    let trajectory = simulate_bounce(start, cfg.length, cfg.height, cfg.width);
    SynthClip {
        clip: render_trajectory(cfg, &trajectory, 1.0),
        labels: labels_from_trajectory(&trajectory),
        trajectory,
    }
}

/// Everything random about a dilated-cue clip.
#[derive(Clone, Debug, PartialEq)]
pub struct CueScene {
    /// `(event frame, class id)`; the cue sits at `frame - cue_separation`.
    pub events: Vec<(usize, usize)>,
    pub distractor: Vec<DotState>,
}

/// Event times and the distractor come from the main stream of `seed`,
/// classes from a second stream, so changing classes leaves the rest intact.
pub fn cue_scene(cfg: &SynthConfig) -> Result<CueScene> {
    cfg.validate_cue()?;
    let k = cfg.cue_separation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut class_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    class_rng.set_stream(1);

    let mut events = Vec::new();
    let mut t = k + rng.random_range(0..=2);
    while t < cfg.length {
        events.push((t, class_rng.random_range(1..=cfg.num_classes)));
        t += 2 * k + 2 + rng.random_range(0..=3);
    }
    let start = random_dot(&mut rng, cfg);
    let distractor = simulate_bounce(start, cfg.length, cfg.height, cfg.width);
    Ok(CueScene { events, distractor })
}

/// Dim distractor dot, a class-coloured corner marker at `t - k` and a
/// class-agnostic central flash at every event frame `t`.
pub fn render_cue(cfg: &SynthConfig, scene: &CueScene, palette: &[[f64; 3]]) -> Result<SynthClip> {
    cfg.validate_cue()?;
    let k = cfg.cue_separation;
    let mut clip = render_trajectory(cfg, &scene.distractor, DISTRACTOR_BRIGHTNESS);
    let mut labels = vec![0; cfg.length];
    let (cy, cx) = (cfg.height / 2 - 1, cfg.width / 2 - 1);
    for &(t, class) in &scene.events {
        if t < k || t >= cfg.length || class == 0 || class > cfg.num_classes {
            return Err(Error::invalid("render_cue", format!("bad event ({t}, {class})")));
        }
        let rgb = *palette.get(class - 1).ok_or_else(|| {
            Error::invalid("render_cue", format!("no palette colour for class {class}"))
        })?;
        draw_block(&mut clip, t - k, 0, 0, rgb);
        draw_block(&mut clip, t, cy, cx, [1.0; 3]);
        labels[t] = class;
    }
    Ok(SynthClip {
        clip,
        labels,
        trajectory: scene.distractor.clone(),
    })
}

/// The event class at `t` is only visible at `t - cue_separation`.
pub fn synth_dilated_cue(cfg: &SynthConfig) -> Result<SynthClip> {
    let scene = cue_scene(cfg)?;
    render_cue(cfg, &scene, &DEFAULT_PALETTE)
}

/// `count` cue clips with per-clip seeds drawn from `cfg.seed`.
pub fn cue_dataset(cfg: &SynthConfig, count: usize) -> Result<Vec<Video>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    seeds.set_stream(2);
    (0..count)
        .map(|_| {
            let clip_cfg = SynthConfig {
                seed: seeds.random(),
                ..cfg.clone()
            };
            Ok(synth_dilated_cue(&clip_cfg)?.into_video())
        })
        .collect()
}

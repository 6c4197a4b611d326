use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::{
    gate_weight_shape, gsm_forward, gsm_param_count, join, msagsm_forward, param_count,
    tsm_forward, ConvParams, MsagsmConfig, MsagsmParams, ParamTree, TSM_DEFAULT_FRACTION,
};
use crate::tensor::{Graph, Padding, Tensor, Var};

const GSM_KERNEL: [usize; 3] = [3, 3, 3];

/// Temporal mixing appended to a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemporalBlock {
    None,
    Tsm { fraction: f64 },
    Gsm,
    Msagsm { heads: usize, dilations: Vec<usize> },
}

impl TemporalBlock {
    fn msagsm_config(&self, channels: usize) -> Result<Option<MsagsmConfig>> {
        match self {
            TemporalBlock::Msagsm { heads, dilations } => {
                Ok(Some(MsagsmConfig::new(channels, *heads, dilations.clone())?))
            }
            _ => Ok(None),
        }
    }

    fn param_count(&self, channels: usize) -> Result<usize> {
        Ok(match self {
            TemporalBlock::None | TemporalBlock::Tsm { .. } => 0,
            TemporalBlock::Gsm => gsm_param_count(channels, GSM_KERNEL),
            TemporalBlock::Msagsm { .. } => {
                param_count(&self.msagsm_config(channels)?.expect("msagsm block"))
            }
        })
    }
}

/// `convs` spatial convolutions (each followed by tanh), then the temporal block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub width: usize,
    pub convs: usize,
    /// Odd square kernel of every convolution in the stage.
    pub kernel: usize,
    pub temporal: TemporalBlock,
}

/// Per-frame classifier: stages, spatial mean pooling, linear head over `K + 1` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub in_channels: usize,
    /// Event classes `K`, excluding background.
    pub num_classes: usize,
    pub stages: Vec<StageConfig>,
}

impl ToyModelConfig {
    /// `depth` stages of a 1x1 convolution plus `temporal`, so every bit of
    /// temporal mixing goes through the temporal blocks.
    pub fn benchmark(in_channels: usize, width: usize, depth: usize, num_classes: usize, temporal: TemporalBlock) -> Self {
        ToyModelConfig {
            in_channels,
            num_classes,
            stages: (0..depth)
                .map(|_| StageConfig {
                    width,
                    convs: 1,
                    kernel: 1,
                    temporal: temporal.clone(),
                })
                .collect(),
        }
    }

    /// Four stages of widths 32-64-128-256 with four 3x3 convolutions each;
    /// `temporal` is inserted in the two deepest stages.
    pub fn reference_backbone(num_classes: usize, temporal: TemporalBlock) -> Self {
        ToyModelConfig {
            in_channels: 3,
            num_classes,
            stages: [32, 64, 128, 256]
                .into_iter()
                .enumerate()
                .map(|(i, width)| StageConfig {
                    width,
                    convs: 4,
                    kernel: 3,
                    temporal: if i >= 2 { temporal.clone() } else { TemporalBlock::None },
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("model.in_channels", "must be positive"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("model.num_classes", "must be positive"));
        }
        if self.stages.is_empty() {
            return Err(Error::config("model.stages", "need at least one stage"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.width == 0 || s.convs == 0 {
                return Err(Error::config(
                    format!("model.stages[{i}]"),
                    "width and conv count must be positive",
                ));
            }
            if s.kernel % 2 == 0 {
                return Err(Error::config(format!("model.stages[{i}].kernel"), "must be odd"));
            }
            match &s.temporal {
                TemporalBlock::Tsm { fraction } if !(*fraction > 0.0 && *fraction <= 0.5) => {
                    return Err(Error::config(
                        format!("model.stages[{i}].temporal.fraction"),
                        format!("must lie in (0, 0.5], got {fraction}"),
                    ))
                }
                TemporalBlock::Gsm if s.width % 2 != 0 => {
                    return Err(Error::config(
                        format!("model.stages[{i}].width"),
                        "gated shift needs an even channel count",
                    ))
                }
                _ => {}
            }
            s.temporal.msagsm_config(s.width)?;
        }
        Ok(())
    }

    pub fn output_classes(&self) -> usize {
        self.num_classes + 1
    }

    /// Exact learnable-scalar count, computed from shapes alone.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let mut total = 0;
        let mut c_in = self.in_channels;
        for s in &self.stages {
            for _ in 0..s.convs {
                total += s.width * c_in * s.kernel * s.kernel + s.width;
                c_in = s.width;
            }
            total += s.temporal.param_count(s.width)?;
        }
        Ok(total + self.output_classes() * (c_in + 1))
    }

    /// Parameters spent on temporal blocks.
    pub fn temporal_param_count(&self) -> Result<usize> {
        self.stages.iter().map(|s| s.temporal.param_count(s.width)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockParams<T = Tensor> {
    None,
    Gsm(ConvParams<T>),
    Msagsm(MsagsmParams<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageParams<T = Tensor> {
    pub convs: Vec<ConvParams<T>>,
    pub temporal: BlockParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyParams<T = Tensor> {
    pub stages: Vec<StageParams<T>>,
    pub head: ConvParams<T>,
}

impl<T> ToyParams<T> {
    /// Applies `f` to every leaf in [`ParamTree`] visiting order.
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ToyParams<U> {
        ToyParams {
            stages: self
                .stages
                .iter()
                .map(|s| StageParams {
                    convs: s.convs.iter().map(|c| c.map(f)).collect(),
                    temporal: match &s.temporal {
                        BlockParams::None => BlockParams::None,
                        BlockParams::Gsm(p) => BlockParams::Gsm(p.map(f)),
                        BlockParams::Msagsm(p) => BlockParams::Msagsm(p.map(f)),
                    },
                })
                .collect(),
            head: self.head.map(f),
        }
    }
}

impl ToyParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ToyModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut c_in = cfg.in_channels;
        let mut stages = Vec::with_capacity(cfg.stages.len());
        for s in &cfg.stages {
            let convs = (0..s.convs)
                .map(|_| {
                    let p = ConvParams::init(&[s.width, c_in, s.kernel, s.kernel], rng);
                    c_in = s.width;
                    p
                })
                .collect();
            let temporal = match &s.temporal {
                TemporalBlock::None | TemporalBlock::Tsm { .. } => BlockParams::None,
                TemporalBlock::Gsm => {
                    BlockParams::Gsm(ConvParams::init(&gate_weight_shape(s.width, GSM_KERNEL), rng))
                }
                TemporalBlock::Msagsm { .. } => {
                    let mc = s.temporal.msagsm_config(s.width)?.expect("msagsm block");
                    BlockParams::Msagsm(MsagsmParams::init(&mc, rng))
                }
            };
            stages.push(StageParams { convs, temporal });
        }
        let head = ConvParams::init(&[cfg.output_classes(), c_in], rng);
        Ok(ToyParams { stages, head })
    }

    pub fn bind(&self, g: &mut Graph) -> ToyParams<Var> {
        self.map(&mut |t| g.leaf(t.clone()))
    }

    pub fn bind_constant(&self, g: &mut Graph) -> ToyParams<Var> {
        self.map(&mut |t| g.constant(t.clone()))
    }
}

impl ToyParams<Var> {
    /// Leaves in visiting order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.map(&mut |v| out.push(*v));
        out
    }
}

impl ParamTree for ToyParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, s) in self.stages.iter().enumerate() {
            let p = join(prefix, &format!("stage{i}"));
            for (j, c) in s.convs.iter().enumerate() {
                c.visit(&format!("{p}.conv{j}"), f);
            }
            match &s.temporal {
                BlockParams::None => {}
                BlockParams::Gsm(g) => g.visit(&format!("{p}.gsm"), f),
                BlockParams::Msagsm(m) => m.visit(&format!("{p}.msagsm"), f),
            }
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            let p = join(prefix, &format!("stage{i}"));
            for (j, c) in s.convs.iter_mut().enumerate() {
                c.visit_mut(&format!("{p}.conv{j}"), f);
            }
            match &mut s.temporal {
                BlockParams::None => {}
                BlockParams::Gsm(g) => g.visit_mut(&format!("{p}.gsm"), f),
                BlockParams::Msagsm(m) => m.visit_mut(&format!("{p}.msagsm"), f),
            }
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Records the model on `g`; `x` is `[C_in, T, H, W]`, the result `[T, K + 1]` logits.
pub fn model_forward(g: &mut Graph, cfg: &ToyModelConfig, params: &ToyParams<Var>, x: Var) -> Result<Var> {
    if params.stages.len() != cfg.stages.len() {
        return Err(Error::invalid("model_forward", "parameters do not match the config"));
    }
    let mut h = x;
    for (s, p) in cfg.stages.iter().zip(&params.stages) {
        for c in &p.convs {
            let y = g.conv2d(h, c.weight, c.bias, Padding::Same)?;
            h = g.tanh(y);
        }
        h = match (&s.temporal, &p.temporal) {
            (TemporalBlock::None, BlockParams::None) => h,
            (TemporalBlock::Tsm { fraction }, BlockParams::None) => tsm_forward(g, h, *fraction)?,
            (TemporalBlock::Gsm, BlockParams::Gsm(gate)) => gsm_forward(g, h, gate)?,
            (t @ TemporalBlock::Msagsm { .. }, BlockParams::Msagsm(m)) => {
                let mc = t.msagsm_config(s.width)?.expect("msagsm block");
                msagsm_forward(g, h, &mc, m)?
            }
            _ => return Err(Error::invalid("model_forward", "parameters do not match the config")),
        };
    }
    let pooled = g.frame_pool(h)?;
    g.linear(pooled, params.head.weight, params.head.bias)
}

/// Per-frame class probabilities `[T, K + 1]` of one clip.
pub fn predict(cfg: &ToyModelConfig, params: &ToyParams, clip: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(clip.clone());
    let bound = params.bind_constant(&mut g);
    let logits = model_forward(&mut g, cfg, &bound, x)?;
    let v = g.value(logits);
    let k = v.shape()[1];
    let data = v
        .data()
        .chunks(k)
        .flat_map(crate::tensor::softmax_slice)
        .collect();
    Tensor::new(v.shape().to_vec(), data)
}

impl Default for TemporalBlock {
    fn default() -> Self {
        TemporalBlock::Msagsm {
            heads: 2,
            dilations: MsagsmConfig::DEFAULT_DILATIONS.to_vec(),
        }
    }
}

impl TemporalBlock {
    pub fn tsm() -> Self {
        TemporalBlock::Tsm {
            fraction: TSM_DEFAULT_FRACTION,
        }
    }
}

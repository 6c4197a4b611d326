//! Parameter containers.
//!
//! Each container is generic over its leaf type: `Tensor` for stored values,
//! `Var` once bound to a [`Graph`], and `Tensor` again for gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Graph, Tensor, Var};

use super::config::MsagsmConfig;
use super::serialize::ParamSet;

/// Walks named parameter tensors in a fixed order.
pub trait ParamTree {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn to_param_set(&self) -> ParamSet {
        let mut set = ParamSet::default();
        self.visit("", &mut |name, t| set.push(name, t.clone()));
        set
    }

    /// Overwrites every parameter from `set`, matching by name and shape.
    fn load_param_set(&mut self, set: &ParamSet) -> Result<()> {
        let mut err = None;
        let mut used = 0;
        self.visit_mut("", &mut |name, t| {
            if err.is_some() {
                return;
            }
            match set.get(&name) {
                None => err = Some(Error::Format(format!("missing parameter `{name}`"))),
                Some(src) if src.shape() != t.shape() => {
                    err = Some(Error::Format(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                Some(src) => {
                    *t = src.clone();
                    used += 1;
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if used != set.len() {
            return Err(Error::Format(format!(
                "parameter set has {} entries, model uses {used}",
                set.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Weight and bias of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = Tensor> {
    pub weight: T,
    pub bias: T,
}

impl<T> ConvParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ConvParams<U> {
        ConvParams {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl ConvParams {
    /// Uniform weights in `[-k, k]` with `k = 1/sqrt(fan_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(weight_shape: &[usize], rng: &mut R) -> Self {
        let fan_in: usize = weight_shape[1..].iter().product();
        let bound = 1.0 / (fan_in as f64).sqrt();
        ConvParams {
            weight: Tensor::uniform(weight_shape, bound, rng),
            bias: Tensor::zeros(&[weight_shape[0]]),
        }
    }

    pub fn zeros(weight_shape: &[usize]) -> Self {
        ConvParams {
            weight: Tensor::zeros(weight_shape),
            bias: Tensor::zeros(&[weight_shape[0]]),
        }
    }
}

impl ParamTree for ConvParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// One single-channel spatial map generator per head.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T = Tensor> {
    pub heads: Vec<ConvParams<T>>,
}

impl<T> AttentionParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> AttentionParams<U> {
        AttentionParams {
            heads: self.heads.iter().map(|h| h.map(f)).collect(),
        }
    }
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(config: &MsagsmConfig, rng: &mut R) -> Self {
        let [kh, kw] = config.attn_kernel;
        AttentionParams {
            heads: (0..config.heads)
                .map(|_| ConvParams::init(&[1, config.channels, kh, kw], rng))
                .collect(),
        }
    }
}

impl ParamTree for AttentionParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, h) in self.heads.iter().enumerate() {
            h.visit(&join(prefix, &format!("head{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, h) in self.heads.iter_mut().enumerate() {
            h.visit_mut(&join(prefix, &format!("head{i}")), f);
        }
    }
}

/// Learnable logits whose softmax weighs the temporal scales.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleWeights<T = Tensor> {
    pub logits: T,
}

impl ScaleWeights {
    /// Zero logits: every scale starts with the same weight.
    pub fn uniform(scales: usize) -> Self {
        ScaleWeights {
            logits: Tensor::zeros(&[scales]),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        crate::tensor::softmax_slice(self.logits.data())
    }
}

/// Per-scale gate convolutions plus the scale logits.
#[derive(Clone, Debug, PartialEq)]
pub struct MsgsmParams<T = Tensor> {
    pub gates: Vec<ConvParams<T>>,
    pub scale: ScaleWeights<T>,
}

impl<T> MsgsmParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> MsgsmParams<U> {
        MsgsmParams {
            gates: self.gates.iter().map(|g| g.map(f)).collect(),
            scale: ScaleWeights {
                logits: f(&self.scale.logits),
            },
        }
    }
}

/// Shape of a gate convolution weight: `C` channels in, one map per direction out.
pub fn gate_weight_shape(channels: usize, kernel: [usize; 3]) -> [usize; 5] {
    [2, channels, kernel[0], kernel[1], kernel[2]]
}

impl MsgsmParams {
    pub fn init<R: Rng + ?Sized>(config: &MsagsmConfig, rng: &mut R) -> Self {
        let shape = gate_weight_shape(config.channels, config.gate_kernel);
        MsgsmParams {
            gates: config
                .dilations
                .iter()
                .map(|_| ConvParams::init(&shape, rng))
                .collect(),
            scale: ScaleWeights::uniform(config.dilations.len()),
        }
    }

    pub fn zeros(config: &MsagsmConfig) -> Self {
        let shape = gate_weight_shape(config.channels, config.gate_kernel);
        MsgsmParams {
            gates: config.dilations.iter().map(|_| ConvParams::zeros(&shape)).collect(),
            scale: ScaleWeights::uniform(config.dilations.len()),
        }
    }
}

impl ParamTree for MsgsmParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, g) in self.gates.iter().enumerate() {
            g.visit(&join(prefix, &format!("gate{i}")), f);
        }
        f(join(prefix, "scale_logits"), &self.scale.logits);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, g) in self.gates.iter_mut().enumerate() {
            g.visit_mut(&join(prefix, &format!("gate{i}")), f);
        }
        f(join(prefix, "scale_logits"), &mut self.scale.logits);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsagsmParams<T = Tensor> {
    pub attention: AttentionParams<T>,
    pub shift: MsgsmParams<T>,
}

impl<T> MsagsmParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> MsagsmParams<U> {
        MsagsmParams {
            attention: self.attention.map(f),
            shift: self.shift.map(f),
        }
    }
}

impl MsagsmParams {
    pub fn init<R: Rng + ?Sized>(config: &MsagsmConfig, rng: &mut R) -> Self {
        MsagsmParams {
            attention: AttentionParams::init(config, rng),
            shift: MsgsmParams::init(config, rng),
        }
    }

    /// Records every tensor as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> MsagsmParams<Var> {
        self.map(&mut |t| g.leaf(t.clone()))
    }
}

impl MsagsmParams<Var> {
    pub fn gradients(&self, grads: &Gradients, like: &MsagsmParams) -> MsagsmParams {
        let mut leaves = Vec::new();
        like.visit("", &mut |_, t| leaves.push(t));
        let mut vars = Vec::new();
        self.map(&mut |v| vars.push(*v));
        let mut it = vars.into_iter().zip(leaves);
        like.map(&mut |_| {
            let (v, t) = it.next().expect("bound tree matches value tree");
            grads.get_or_zeros(v, t)
        })
    }
}

impl ParamTree for MsagsmParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.attention.visit(&join(prefix, "attention"), f);
        self.shift.visit(&join(prefix, "shift"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.shift.visit_mut(&join(prefix, "shift"), f);
    }
}

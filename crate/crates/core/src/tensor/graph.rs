use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::conv::{self, ConvGeom, Padding};
use super::{sigmoid, softmax_slice, Tensor};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    RollTime {
        x: Var,
        offset: isize,
    },
    Tanh(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulChannel {
        x: Var,
        map: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    ScaleByEntry {
        x: Var,
        v: Var,
        entry: usize,
    },
    Softmax(Var),
    ChannelSlice {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Sum(Var),
    FramePool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    WeightedCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        frame_weights: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::Conv { x, w, b, .. } | Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::RollTime { x, .. }
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Scale { x, .. }
            | Op::Softmax(x)
            | Op::ChannelSlice { x, .. }
            | Op::Sum(x)
            | Op::FramePool(x) => vec![*x],
            Op::WeightedCrossEntropy { logits, .. } => vec![*logits],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::MulChannel { x, map } => vec![*x, *map],
            Op::ScaleByEntry { x, v, .. } => vec![*x, *v],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A tape of operations recorded in execution (hence topological) order.
///
/// Every op evaluates eagerly; [`Graph::backward`] walks the tape in reverse
/// and visits each node once.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar output with respect to every recorded value that
/// depends on a leaf.
#[derive(Debug)]
pub struct Gradients {
    graph: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::UnknownVar { index: v.index });
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            other => other
                .inputs()
                .iter()
                .any(|v| self.nodes[v.index].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// A differentiable input (parameter or probed input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.graph, self.id, "variable belongs to another graph");
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// 2D cross-correlation applied independently to every frame.
    ///
    /// `x` is `[C_in, H, W]` or a frame stack `[C_in, T, H, W]`; `w` is
    /// `[C_out, C_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        const OP: &str = "conv2d";
        for v in [x, w, b] {
            self.check(v)?;
        }
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let x4 = match xs.as_slice() {
            [c, h, wd] => vec![*c, 1, *h, *wd],
            [c, t, h, wd] => vec![*c, *t, *h, *wd],
            _ => return Err(Error::shape(OP, format!("input must be rank 3 or 4, got {xs:?}"))),
        };
        let w5 = match ws.as_slice() {
            [co, ci, kh, kw] => vec![*co, *ci, 1, *kh, *kw],
            _ => return Err(Error::shape(OP, format!("weight must be rank 4, got {ws:?}"))),
        };
        let padding = match padding {
            Padding::Explicit { time: 0, .. } | Padding::Same | Padding::Valid => padding,
            Padding::Explicit { .. } => {
                return Err(Error::invalid(OP, "2D convolution takes no temporal padding"))
            }
        };
        let geom = ConvGeom::resolve(OP, &x4, &w5, self.shape(b), 1, padding)?;
        let y = conv::forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let shape = if xs.len() == 3 {
            vec![geom.c_out, geom.oh, geom.ow]
        } else {
            geom.out_shape()
        };
        Ok(self.push(Tensor::new(shape, y)?, Op::Conv { x, w, b, geom }))
    }

    /// 3D cross-correlation with temporal dilation.
    ///
    /// `x` is `[C_in, T, H, W]`, `w` is `[C_out, C_in, kt, kh, kw]`. Temporal
    /// taps for output frame `t` sit at `t - dilation`, `t`, `t + dilation`
    /// (for `kt = 3`); taps outside the clip read zero.
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        for v in [x, w, b] {
            self.check(v)?;
        }
        let geom = ConvGeom::resolve(
            "conv3d",
            self.shape(x),
            self.shape(w),
            self.shape(b),
            dilation,
            padding,
        )?;
        let y = conv::forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        Ok(self.push(Tensor::new(geom.out_shape(), y)?, Op::Conv { x, w, b, geom }))
    }

    /// Non-circular shift along the time axis (third axis from the end):
    /// `out[t] = x[t - offset]`, zero where that frame does not exist.
    pub fn roll_time(&mut self, x: Var, offset: isize) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        if shape.len() < 3 {
            return Err(Error::shape(
                "roll_time",
                format!("input needs [.., T, H, W] axes, got {shape:?}"),
            ));
        }
        let t = shape[shape.len() - 3];
        if offset.unsigned_abs() >= t {
            return Err(Error::invalid(
                "roll_time",
                format!("|offset| = {} must be below the clip length {t}", offset.unsigned_abs()),
            ));
        }
        let y = roll_frames(self.value(x).data(), &shape, offset);
        Ok(self.push(Tensor::new(shape, y)?, Op::RollTime { x, offset }))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(f64::tanh);
        self.push(y, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(sigmoid);
        self.push(y, Op::Sigmoid(x))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("operands {:?} and {:?} differ", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let y = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let y = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    /// The one permitted broadcast: a single-channel map `[1, ...]` multiplies
    /// every channel of `x` `[C, ...]`.
    pub fn mul_channel_broadcast(&mut self, x: Var, map: Var) -> Result<Var> {
        self.check(x)?;
        self.check(map)?;
        let (xs, ms) = (self.shape(x), self.shape(map));
        if ms.first() != Some(&1) || xs[1..] != ms[1..] {
            return Err(Error::shape(
                "mul_channel_broadcast",
                format!("map {ms:?} must be [1, ..] matching the trailing axes of {xs:?}"),
            ));
        }
        let vx = self.value(x);
        let m = self.value(map).data();
        let stride = vx.channel_stride();
        let data = vx
            .data()
            .chunks(stride)
            .flat_map(|chunk| chunk.iter().zip(m).map(|(a, b)| a * b))
            .collect();
        let y = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(y, Op::MulChannel { x, map }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let y = self.value(x).map(|v| v * factor);
        self.push(y, Op::Scale { x, factor })
    }

    /// `x * v[entry]` where `v` is a vector.
    pub fn scale_by_entry(&mut self, x: Var, v: Var, entry: usize) -> Result<Var> {
        self.check(x)?;
        self.check(v)?;
        let vv = self.value(v);
        if vv.rank() != 1 || entry >= vv.len() {
            return Err(Error::shape(
                "scale_by_entry",
                format!("entry {entry} out of range for vector {:?}", vv.shape()),
            ));
        }
        let s = vv.data()[entry];
        let y = self.value(x).map(|a| a * s);
        Ok(self.push(y, Op::ScaleByEntry { x, v, entry }))
    }

    /// Max-subtracted softmax of a vector.
    pub fn softmax(&mut self, v: Var) -> Result<Var> {
        self.check(v)?;
        let vv = self.value(v);
        if vv.rank() != 1 {
            return Err(Error::shape("softmax", format!("expected a vector, got {:?}", vv.shape())));
        }
        if !vv.is_finite() {
            return Err(Error::invalid("softmax", "logits must be finite"));
        }
        let y = Tensor::from_vec(softmax_slice(vv.data()));
        Ok(self.push(y, Op::Softmax(v)))
    }

    /// Contiguous channel range `[start, start + len)`.
    pub fn channel_slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let vx = self.value(x);
        let c = vx.shape()[0];
        if len == 0 || start + len > c {
            return Err(Error::shape(
                "channel_slice",
                format!("channels [{start}, {}) out of range for C = {c}", start + len),
            ));
        }
        let stride = vx.channel_stride();
        let data = vx.data()[start * stride..(start + len) * stride].to_vec();
        let mut shape = vx.shape().to_vec();
        shape[0] = len;
        let y = Tensor::new(shape, data)?;
        Ok(self.push(y, Op::ChannelSlice { x, start }))
    }

    /// Splits the channel axis into `parts` equal contiguous chunks, in order.
    pub fn split_channels(&mut self, x: Var, parts: usize) -> Result<Vec<Var>> {
        self.check(x)?;
        let c = self.shape(x)[0];
        if parts == 0 || c % parts != 0 {
            return Err(Error::shape(
                "split_channels",
                format!("{parts} parts do not divide C = {c}"),
            ));
        }
        let len = c / parts;
        (0..parts)
            .map(|i| self.channel_slice(x, i * len, len))
            .collect()
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat_channels", "nothing to concatenate"))?;
        for &p in parts {
            self.check(p)?;
        }
        let tail = self.shape(first)[1..].to_vec();
        let mut channels = 0;
        let mut data = Vec::new();
        for &p in parts {
            let vp = self.value(p);
            if vp.shape()[1..] != tail[..] {
                return Err(Error::shape(
                    "concat_channels",
                    format!("trailing axes {:?} differ from {tail:?}", &vp.shape()[1..]),
                ));
            }
            channels += vp.shape()[0];
            data.extend_from_slice(vp.data());
        }
        let mut shape = vec![channels];
        shape.extend(tail);
        let y = Tensor::new(shape, data)?;
        Ok(self.push(y, Op::Concat(parts.to_vec())))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Spatial mean of `[C, T, H, W]`, transposed to per-frame rows `[T, C]`.
    pub fn frame_pool(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let vx = self.value(x);
        let [c, t, h, w] = <[usize; 4]>::try_from(vx.shape()).map_err(|_| {
            Error::shape("frame_pool", format!("expected [C, T, H, W], got {:?}", vx.shape()))
        })?;
        let plane = h * w;
        let mut y = vec![0.0; t * c];
        for ci in 0..c {
            for ti in 0..t {
                let s: f64 = vx.data()[(ci * t + ti) * plane..][..plane].iter().sum();
                y[ti * c + ci] = s / plane as f64;
            }
        }
        let y = Tensor::new(vec![t, c], y)?;
        Ok(self.push(y, Op::FramePool(x)))
    }

    /// Row-wise affine map: `x` `[N, C_in]`, `w` `[C_out, C_in]`, `b` `[C_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        for v in [x, w, b] {
            self.check(v)?;
        }
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        let (n, ci) = match xs {
            [n, ci] => (*n, *ci),
            _ => return Err(Error::shape("linear", format!("input must be [N, C], got {xs:?}"))),
        };
        if ws.len() != 2 || ws[1] != ci || bs != [ws[0]] {
            return Err(Error::shape(
                "linear",
                format!("input features: input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let co = ws[0];
        let (vx, vw, vb) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut y = vec![0.0; n * co];
        for r in 0..n {
            let xr = &vx[r * ci..(r + 1) * ci];
            for o in 0..co {
                let wr = &vw[o * ci..(o + 1) * ci];
                y[r * co + o] = vb[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let y = Tensor::new(vec![n, co], y)?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Mean over frames of per-frame cross-entropy, each frame scaled by
    /// `frame_weights[t]`. `logits` is `[T, classes]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        frame_weights: &[f64],
    ) -> Result<Var> {
        self.check(logits)?;
        let vl = self.value(logits);
        let [t, k] = <[usize; 2]>::try_from(vl.shape()).map_err(|_| {
            Error::shape("cross_entropy", format!("logits must be [T, K], got {:?}", vl.shape()))
        })?;
        if labels.len() != t || frame_weights.len() != t {
            return Err(Error::shape(
                "cross_entropy",
                format!(
                    "frames: logits have {t}, labels {}, weights {}",
                    labels.len(),
                    frame_weights.len()
                ),
            ));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::invalid(
                "cross_entropy",
                format!("label {l} at frame {i} outside [0, {k})"),
            ));
        }
        let mut probs = Vec::with_capacity(t * k);
        let mut loss = 0.0;
        for (ti, row) in vl.data().chunks(k).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += frame_weights[ti] * (lse - row[labels[ti]]);
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let y = Tensor::scalar(loss / t as f64);
        Ok(self.push(
            y,
            Op::WeightedCrossEntropy {
                logits,
                labels: labels.to_vec(),
                frame_weights: frame_weights.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar output with seed 1.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.check(output)?;
        let shape = self.shape(output);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::shape(
                "backward",
                format!("implicit seed needs a scalar output, got {shape:?}"),
            ));
        }
        self.backward_with_seed(output, &Tensor::full(shape, 1.0))
    }

    /// Reverse-mode sweep from `output` seeded with `seed`.
    pub fn backward_with_seed(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        self.check(output)?;
        if seed.shape() != self.shape(output) {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed {:?} does not match output {:?}",
                    seed.shape(),
                    self.shape(output)
                ),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.index + 1];
        grads[output.index] = Some(seed.data().to_vec());
        for i in (0..=output.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad).map(|g| {
                    Tensor::new(self.nodes[i].value.shape().to_vec(), g)
                        .expect("gradient shaped like its value")
                })
            })
            .collect();
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn propagate(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, g: Vec<f64>| match &mut grads[v.index] {
            Some(existing) => existing.iter_mut().zip(g).for_each(|(e, d)| *e += d),
            slot @ None => *slot = Some(g),
        };
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Conv { x, w, b, geom } => {
                let (dx, dw, db) = conv::backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    dy,
                    self.wants(*x),
                    self.wants(*w),
                );
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
                if self.wants(*b) {
                    acc(*b, db);
                }
            }
            Op::RollTime { x, offset } => {
                acc(*x, roll_frames(dy, node.value.shape(), -offset));
            }
            Op::Tanh(x) => acc(*x, dy.iter().zip(y).map(|(d, t)| d * (1.0 - t * t)).collect()),
            Op::Sigmoid(x) => acc(*x, dy.iter().zip(y).map(|(d, s)| d * s * (1.0 - s)).collect()),
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(*a, dy.to_vec());
                }
                if self.wants(*b) {
                    acc(*b, dy.to_vec());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    acc(*a, dy.iter().zip(vb).map(|(d, v)| d * v).collect());
                }
                if self.wants(*b) {
                    acc(*b, dy.iter().zip(va).map(|(d, v)| d * v).collect());
                }
            }
            Op::MulChannel { x, map } => {
                let vx = self.value(*x);
                let m = self.value(*map).data();
                let stride = vx.channel_stride();
                if self.wants(*x) {
                    let g = dy
                        .chunks(stride)
                        .flat_map(|c| c.iter().zip(m).map(|(d, v)| d * v))
                        .collect();
                    acc(*x, g);
                }
                if self.wants(*map) {
                    let mut g = vec![0.0; stride];
                    for (dc, xc) in dy.chunks(stride).zip(vx.data().chunks(stride)) {
                        for ((gi, d), v) in g.iter_mut().zip(dc).zip(xc) {
                            *gi += d * v;
                        }
                    }
                    acc(*map, g);
                }
            }
            Op::Scale { x, factor } => acc(*x, dy.iter().map(|d| d * factor).collect()),
            Op::ScaleByEntry { x, v, entry } => {
                let vv = self.value(*v);
                if self.wants(*x) {
                    let s = vv.data()[*entry];
                    acc(*x, dy.iter().map(|d| d * s).collect());
                }
                if self.wants(*v) {
                    let mut g = vec![0.0; vv.len()];
                    g[*entry] = dy.iter().zip(self.value(*x).data()).map(|(d, a)| d * a).sum();
                    acc(*v, g);
                }
            }
            Op::Softmax(v) => {
                let dot: f64 = dy.iter().zip(y).map(|(d, s)| d * s).sum();
                acc(*v, dy.iter().zip(y).map(|(d, s)| s * (d - dot)).collect());
            }
            Op::ChannelSlice { x, start, .. } => {
                let vx = self.value(*x);
                let stride = vx.channel_stride();
                let mut g = vec![0.0; vx.len()];
                g[start * stride..start * stride + dy.len()].copy_from_slice(dy);
                acc(*x, g);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.wants(p) {
                        acc(p, dy[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::Sum(x) => acc(*x, vec![dy[0]; self.value(*x).len()]),
            Op::FramePool(x) => {
                let s = self.value(*x).shape();
                let (c, t, plane) = (s[0], s[1], s[2] * s[3]);
                let mut g = vec![0.0; c * t * plane];
                for ci in 0..c {
                    for ti in 0..t {
                        let d = dy[ti * c + ci] / plane as f64;
                        g[(ci * t + ti) * plane..][..plane].fill(d);
                    }
                }
                acc(*x, g);
            }
            Op::Linear { x, w, b } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let (n, ci) = (vx.shape()[0], vx.shape()[1]);
                let co = vw.shape()[0];
                if self.wants(*x) {
                    let mut g = vec![0.0; n * ci];
                    for r in 0..n {
                        for o in 0..co {
                            let d = dy[r * co + o];
                            let wr = &vw.data()[o * ci..(o + 1) * ci];
                            for (gi, wv) in g[r * ci..(r + 1) * ci].iter_mut().zip(wr) {
                                *gi += d * wv;
                            }
                        }
                    }
                    acc(*x, g);
                }
                if self.wants(*w) {
                    let mut g = vec![0.0; co * ci];
                    for r in 0..n {
                        let xr = &vx.data()[r * ci..(r + 1) * ci];
                        for o in 0..co {
                            let d = dy[r * co + o];
                            for (gi, xv) in g[o * ci..(o + 1) * ci].iter_mut().zip(xr) {
                                *gi += d * xv;
                            }
                        }
                    }
                    acc(*w, g);
                }
                if self.wants(*b) {
                    let mut g = vec![0.0; co];
                    for r in 0..n {
                        for (gi, d) in g.iter_mut().zip(&dy[r * co..(r + 1) * co]) {
                            *gi += d;
                        }
                    }
                    acc(*b, g);
                }
            }
            Op::WeightedCrossEntropy {
                logits,
                labels,
                frame_weights,
                probs,
            } => {
                let t = labels.len();
                let k = probs.len() / t;
                let mut g = probs.clone();
                for ti in 0..t {
                    g[ti * k + labels[ti]] -= 1.0;
                    let s = dy[0] * frame_weights[ti] / t as f64;
                    g[ti * k..(ti + 1) * k].iter_mut().for_each(|v| *v *= s);
                }
                acc(*logits, g);
            }
        }
    }
}

/// `out[.., t, ..] = x[.., t - offset, ..]` with zero fill.
fn roll_frames(x: &[f64], shape: &[usize], offset: isize) -> Vec<f64> {
    let r = shape.len();
    let t = shape[r - 3];
    let plane = shape[r - 2] * shape[r - 1];
    let frame_block = t * plane;
    let mut y = vec![0.0; x.len()];
    for (yb, xb) in y.chunks_mut(frame_block).zip(x.chunks(frame_block)) {
        for ti in 0..t {
            let src = ti as isize - offset;
            if (0..t as isize).contains(&src) {
                let src = src as usize;
                yb[ti * plane..(ti + 1) * plane].copy_from_slice(&xb[src * plane..(src + 1) * plane]);
            }
        }
    }
    y
}

//! The temporal module family: TSM, GSM, multi-scale GSM, multi-head spatial
//! attention, and their composition.

mod attention;
mod config;
mod params;
mod serialize;
mod shift;

pub use attention::attention_forward;
pub use config::MsagsmConfig;
pub(crate) use params::join;
pub use params::{
    gate_weight_shape, AttentionParams, ConvParams, MsagsmParams, MsgsmParams, ParamTree,
    ScaleWeights,
};
pub use serialize::{NamedArray, ParamSet};
pub use shift::{
    gate_maps, gated_shift, gated_shift_branch, gsm_forward, msgsm_forward, tsm_forward, GateMaps,
    TSM_DEFAULT_FRACTION,
};

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

/// Attention first, then the multi-scale gated shift on the attended features.
pub fn msagsm_forward(
    g: &mut Graph,
    x: Var,
    config: &MsagsmConfig,
    params: &MsagsmParams<Var>,
) -> Result<Var> {
    config.validate()?;
    let attended = attention_forward(g, x, &params.attention)?;
    msgsm_forward(g, attended, &params.shift, &config.dilations)
}

/// Exact learnable-scalar count of one MSAGSM block.
pub fn param_count(config: &MsagsmConfig) -> usize {
    let [kh, kw] = config.attn_kernel;
    let attention = config.heads * (config.channels * kh * kw + 1);
    let scales = config.dilations.len();
    attention + scales * gate_param_count(config.channels, config.gate_kernel) + scales
}

/// Parameters of one gate convolution (`C -> 2` maps plus two biases).
pub fn gate_param_count(channels: usize, kernel: [usize; 3]) -> usize {
    2 * channels * kernel.iter().product::<usize>() + 2
}

/// A GSM block has a single gate convolution and nothing else.
pub fn gsm_param_count(channels: usize, kernel: [usize; 3]) -> usize {
    gate_param_count(channels, kernel)
}

/// Configuration and parameters of one block, evaluated outside any training graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Msagsm {
    pub config: MsagsmConfig,
    pub params: MsagsmParams,
}

impl Msagsm {
    pub fn init<R: Rng + ?Sized>(config: MsagsmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = MsagsmParams::init(&config, rng);
        Ok(Msagsm { config, params })
    }

    /// Records the block on `g` with its parameters as leaves.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, MsagsmParams<Var>)> {
        let bound = self.params.bind(g);
        let y = msagsm_forward(g, x, &self.config, &bound)?;
        Ok((y, bound))
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let bound = self.params.map(&mut |t| g.constant(t.clone()));
        let y = msagsm_forward(&mut g, xv, &self.config, &bound)?;
        Ok(g.value(y).clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }
}

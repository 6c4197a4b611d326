use crate::error::{Error, Result};
use crate::tensor::{Graph, Padding, Var};

use super::params::AttentionParams;

/// Multi-head spatial attention.
///
/// Head `h` correlates the full feature map with its own kernel, squashes the
/// result through a sigmoid into a single-channel map per frame, and scales
/// only its own contiguous chunk of `C / heads` channels by that map. The
/// attended chunks are concatenated back in order.
pub fn attention_forward(g: &mut Graph, x: Var, attn: &AttentionParams<Var>) -> Result<Var> {
    let heads = attn.heads.len();
    let c = *g
        .shape(x)
        .first()
        .ok_or_else(|| Error::shape("attention", "empty shape"))?;
    if g.shape(x).len() != 4 {
        return Err(Error::shape(
            "attention",
            format!("expected [C, T, H, W], got {:?}", g.shape(x)),
        ));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::shape(
            "attention",
            format!("{heads} heads do not divide {c} channels"),
        ));
    }
    let chunks = g.split_channels(x, heads)?;
    let mut attended = Vec::with_capacity(heads);
    for (chunk, head) in chunks.into_iter().zip(&attn.heads) {
        let logits = g.conv2d(x, head.weight, head.bias, Padding::Same)?;
        let map = g.sigmoid(logits);
        attended.push(g.mul_channel_broadcast(chunk, map)?);
    }
    g.concat_channels(&attended)
}

//! Temporal shifting: the parameter-free TSM baseline, the gated shift (GSM)
//! and its multi-scale extension.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Padding, Var};

use super::config::{check_dilations_fit, validate_dilations};
use super::params::{ConvParams, MsgsmParams};

/// Default fraction of channels shifted in each direction by TSM.
pub const TSM_DEFAULT_FRACTION: f64 = 0.125;

fn feature_dims(g: &Graph, x: Var, op: &'static str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(g.shape(x))
        .map_err(|_| Error::shape(op, format!("expected [C, T, H, W], got {:?}", g.shape(x))))
}

/// Shifts the first `floor(C * fraction)` channels back one frame, the next
/// block forward one frame, and leaves the rest untouched.
pub fn tsm_forward(g: &mut Graph, x: Var, shift_fraction: f64) -> Result<Var> {
    let [c, t, _, _] = feature_dims(g, x, "tsm")?;
    let n = (c as f64 * shift_fraction).floor() as usize;
    if n < 1 {
        return Err(Error::invalid(
            "tsm",
            format!(
                "{c} channels with shift fraction {shift_fraction} shift no channel; \
                 pass a fraction of at least 1/{c}"
            ),
        ));
    }
    if 2 * n > c {
        return Err(Error::invalid(
            "tsm",
            format!("shift fraction {shift_fraction} moves more than all {c} channels"),
        ));
    }
    let back = g.channel_slice(x, 0, n)?;
    let fwd = g.channel_slice(x, n, n)?;
    let (back, fwd) = if t > 1 {
        (g.roll_time(back, -1)?, g.roll_time(fwd, 1)?)
    } else {
        // A single frame has nowhere to move: the shifted channels empty out.
        (g.scale(back, 0.0), g.scale(fwd, 0.0))
    };
    let mut parts = vec![back, fwd];
    if 2 * n < c {
        parts.push(g.channel_slice(x, 2 * n, c - 2 * n)?);
    }
    g.concat_channels(&parts)
}

/// Left and right gate maps `[1, T, H, W]` in `(-1, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct GateMaps {
    pub left: Var,
    pub right: Var,
}

pub fn gate_maps(g: &mut Graph, x: Var, gate: &ConvParams<Var>, dilation: usize) -> Result<GateMaps> {
    let raw = g.conv3d(x, gate.weight, gate.bias, dilation, Padding::Same)?;
    let maps = g.tanh(raw);
    Ok(GateMaps {
        left: g.channel_slice(maps, 0, 1)?,
        right: g.channel_slice(maps, 1, 1)?,
    })
}

/// Gated, shifted halves `[roll(x_left * g_left, -d), roll(x_right * g_right, +d)]`
/// without the residual.
pub fn gated_shift(g: &mut Graph, x: Var, gate: &ConvParams<Var>, dilation: usize) -> Result<Var> {
    let [c, t, _, _] = feature_dims(g, x, "gated_shift")?;
    if c % 2 != 0 {
        return Err(Error::shape("gated_shift", format!("channel count {c} is odd")));
    }
    check_dilations_fit(&[dilation], t)?;
    let maps = gate_maps(g, x, gate, dilation)?;
    let halves = g.split_channels(x, 2)?;
    let left = g.mul_channel_broadcast(halves[0], maps.left)?;
    let right = g.mul_channel_broadcast(halves[1], maps.right)?;
    let d = dilation as isize;
    let left = g.roll_time(left, -d)?;
    let right = g.roll_time(right, d)?;
    g.concat_channels(&[left, right])
}

/// One gated shift branch with its residual.
pub fn gated_shift_branch(
    g: &mut Graph,
    x: Var,
    gate: &ConvParams<Var>,
    dilation: usize,
) -> Result<Var> {
    let shifted = gated_shift(g, x, gate, dilation)?;
    g.add(shifted, x)
}

/// Single-scale gated shift at dilation 1.
pub fn gsm_forward(g: &mut Graph, x: Var, gate: &ConvParams<Var>) -> Result<Var> {
    gated_shift_branch(g, x, gate, 1)
}

/// Softmax-weighted sum of gated shift branches, one per dilation.
///
/// The weights sum to one, so the shared residual is added once outside the
/// weighted sum: `x + sum_i w_i * shift_i(x)`.
pub fn msgsm_forward(
    g: &mut Graph,
    x: Var,
    params: &MsgsmParams<Var>,
    dilations: &[usize],
) -> Result<Var> {
    validate_dilations(dilations)?;
    let [c, t, _, _] = feature_dims(g, x, "msgsm")?;
    if c % 2 != 0 {
        return Err(Error::shape("msgsm", format!("channel count {c} is odd")));
    }
    check_dilations_fit(dilations, t)?;
    if params.gates.len() != dilations.len() || g.shape(params.scale.logits) != [dilations.len()] {
        return Err(Error::shape(
            "msgsm",
            format!(
                "{} dilations need as many gates and logits, got {} gates and logits {:?}",
                dilations.len(),
                params.gates.len(),
                g.shape(params.scale.logits)
            ),
        ));
    }
    let weights = g.softmax(params.scale.logits)?;
    let mut acc = x;
    for (i, (gate, &d)) in params.gates.iter().zip(dilations).enumerate() {
        let shifted = gated_shift(g, x, gate, d)?;
        let weighted = g.scale_by_entry(shifted, weights, i)?;
        acc = g.add(acc, weighted)?;
    }
    Ok(acc)
}

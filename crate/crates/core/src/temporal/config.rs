use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one multi-scale attention gate shift block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsagsmConfig {
    pub channels: usize,
    pub heads: usize,
    /// Temporal shift distances, strictly increasing.
    pub dilations: Vec<usize>,
    /// `[kt, kh, kw]` of every gate convolution.
    #[serde(default = "default_gate_kernel")]
    pub gate_kernel: [usize; 3],
    /// `[kh, kw]` of every attention head convolution.
    #[serde(default = "default_attn_kernel")]
    pub attn_kernel: [usize; 2],
}

fn default_gate_kernel() -> [usize; 3] {
    [3, 3, 3]
}

fn default_attn_kernel() -> [usize; 2] {
    [3, 3]
}

impl MsagsmConfig {
    pub const DEFAULT_DILATIONS: [usize; 3] = [1, 2, 3];

    pub fn new(channels: usize, heads: usize, dilations: Vec<usize>) -> Result<Self> {
        let cfg = MsagsmConfig {
            channels,
            heads,
            dilations,
            gate_kernel: default_gate_kernel(),
            attn_kernel: default_attn_kernel(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gate_kernel(mut self, kernel: [usize; 3]) -> Result<Self> {
        self.gate_kernel = kernel;
        self.validate()?;
        Ok(self)
    }

    pub fn with_attn_kernel(mut self, kernel: [usize; 2]) -> Result<Self> {
        self.attn_kernel = kernel;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_channels(self.channels)?;
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::config(
                "heads",
                format!("{} heads do not divide {} channels", self.heads, self.channels),
            ));
        }
        validate_dilations(&self.dilations)?;
        let [kt, kh, kw] = self.gate_kernel;
        if kt != 3 {
            return Err(Error::config(
                "gate_kernel",
                format!("gates read a three-frame window, temporal extent must be 3 (got {kt})"),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::config("gate_kernel", "spatial extents must be odd"));
        }
        let [ah, aw] = self.attn_kernel;
        if ah % 2 == 0 || aw % 2 == 0 {
            return Err(Error::config("attn_kernel", "spatial extents must be odd"));
        }
        Ok(())
    }

    /// Checks that every dilation fits inside a clip of `frames` frames.
    pub fn validate_for_length(&self, frames: usize) -> Result<()> {
        check_dilations_fit(&self.dilations, frames)
    }
}

pub(crate) fn validate_channels(channels: usize) -> Result<()> {
    if channels == 0 || channels % 2 != 0 {
        return Err(Error::config(
            "channels",
            format!("channel count must be positive and even, got {channels}"),
        ));
    }
    Ok(())
}

pub(crate) fn validate_dilations(dilations: &[usize]) -> Result<()> {
    if dilations.is_empty() {
        return Err(Error::config("dilations", "at least one dilation is required"));
    }
    if dilations[0] < 1 {
        return Err(Error::config("dilations", "dilations start at 1"));
    }
    if let Some(w) = dilations.windows(2).find(|w| w[1] <= w[0]) {
        let detail = if w[0] == w[1] {
            format!("duplicate dilation {}", w[0])
        } else {
            format!("dilations must be strictly increasing ({} then {})", w[0], w[1])
        };
        return Err(Error::config("dilations", detail));
    }
    Ok(())
}

pub(crate) fn check_dilations_fit(dilations: &[usize], frames: usize) -> Result<()> {
    if let Some(&d) = dilations.iter().find(|&&d| d >= frames) {
        return Err(Error::invalid(
            "msgsm",
            format!("dilation {d} must be below the clip length {frames}"),
        ));
    }
    Ok(())
}

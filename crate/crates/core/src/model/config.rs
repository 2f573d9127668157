use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    /// One period of dilations; repeated to cover `n_layers`.
    pub dilation_cycle: Vec<usize>,
    pub embedding_dim: usize,
    pub embedding_c: f64,
    pub embedding_gamma: f64,
    /// Width of the two shared fully-connected layers after the embedding.
    pub embedding_hidden: usize,
    pub ratio: usize,
}

impl ModelConfig {
    /// 30 layers of 64 channels, dilations `[1, 2, ..., 512] x 3`.
    pub fn paper(ratio: usize) -> Self {
        Self {
            n_layers: 30,
            channels: 64,
            kernel_size: 3,
            dilation_cycle: (0..10).map(|i| 1 << i).collect(),
            embedding_dim: 128,
            embedding_c: 50_000.0,
            embedding_gamma: 1.0 / 16.0,
            embedding_hidden: 512,
            ratio,
        }
    }

    /// Small configuration for CPU-scale training.
    pub fn desk(ratio: usize) -> Self {
        Self { n_layers: 4, channels: 16, dilation_cycle: vec![1, 2, 4, 8], ..Self::paper(ratio) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("model config: {m}")));
        if self.n_layers == 0 || self.channels == 0 || self.embedding_hidden == 0 {
            return bad("layer count, channel count and hidden width must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.dilation_cycle.is_empty() || self.dilation_cycle.contains(&0) {
            return bad("dilation cycle must be non-empty with positive entries".into());
        }
        if !self.n_layers.is_multiple_of(self.dilation_cycle.len()) {
            return bad(format!(
                "{} layers is not a whole number of {}-entry dilation cycles",
                self.n_layers,
                self.dilation_cycle.len()
            ));
        }
        if self.embedding_dim == 0 || !self.embedding_dim.is_multiple_of(2) {
            return bad(format!("embedding dim {} must be even", self.embedding_dim));
        }
        if self.ratio < 2 {
            return bad(format!("upscale ratio {} must be >= 2", self.ratio));
        }
        Ok(())
    }

    /// Per-layer dilations, `n_layers` long.
    pub fn dilations(&self) -> Vec<usize> {
        self.dilation_cycle.iter().copied().cycle().take(self.n_layers).collect()
    }
}

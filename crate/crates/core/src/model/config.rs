use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the ViT encoder and the convolutional decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_px: usize,
    pub token_patch_px: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    /// 1-based block indices whose outputs feed the decoder, shallowest first.
    /// The last entry is the deepest feature map.
    pub tap_layers: Vec<usize>,
    pub mlp_ratio: usize,
    pub in_chans: usize,
    /// Channel width `F` of the decoder; stages use F, 2F, 4F and 8F.
    pub decoder_features: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::base(1024)
    }
}

/// Decoder doublings from the token grid to the input resolution.
pub const DECODER_DOUBLINGS: usize = 4;

impl EncoderConfig {
    /// Base-size encoder (depth 12, width 768, 12 heads).
    pub fn base(input_px: usize) -> Self {
        Self {
            input_px,
            token_patch_px: 16,
            embed_dim: 768,
            depth: 12,
            heads: 12,
            tap_layers: default_taps(12),
            mlp_ratio: 4,
            in_chans: 1,
            decoder_features: 16,
        }
    }

    /// Desk-scale model: depth 4, width 128, 224-pixel input.
    pub fn toy() -> Self {
        Self {
            input_px: 224,
            token_patch_px: 16,
            embed_dim: 128,
            depth: 4,
            heads: 4,
            tap_layers: default_taps(4),
            mlp_ratio: 4,
            in_chans: 1,
            decoder_features: 8,
        }
    }

    pub fn grid_side(&self) -> usize {
        self.input_px / self.token_patch_px
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.token_patch_px == 0 || self.input_px == 0 {
            return fail("input_px and token_patch_px must be positive".into());
        }
        if self.input_px % self.token_patch_px != 0 {
            return fail(format!(
                "input_px {} not divisible by token_patch_px {}",
                self.input_px, self.token_patch_px
            ));
        }
        if self.token_patch_px != 1 << DECODER_DOUBLINGS {
            return fail(format!(
                "token_patch_px {} unsupported: the decoder reaches input resolution in {} doublings (patch 16)",
                self.token_patch_px, DECODER_DOUBLINGS
            ));
        }
        if self.depth == 0 || self.embed_dim == 0 || self.heads == 0 {
            return fail("depth, embed_dim and heads must be positive".into());
        }
        if self.embed_dim % self.heads != 0 {
            return fail(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.tap_layers.len() != 4 {
            return fail(format!("tap_layers needs 4 entries, got {}", self.tap_layers.len()));
        }
        if self.tap_layers[0] == 0 || self.tap_layers.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("tap_layers {:?} must be strictly increasing from 1", self.tap_layers));
        }
        if *self.tap_layers.last().unwrap() > self.depth {
            return fail(format!("tap_layers {:?} exceed depth {}", self.tap_layers, self.depth));
        }
        if self.mlp_ratio == 0 || self.in_chans == 0 || self.decoder_features == 0 {
            return fail("mlp_ratio, in_chans and decoder_features must be positive".into());
        }
        Ok(())
    }
}

/// `depth × {1/4, 2/4, 3/4, 4/4}`, rounded, clamped to stay strictly increasing.
pub fn default_taps(depth: usize) -> Vec<usize> {
    let mut taps = Vec::with_capacity(4);
    for k in 1..=4 {
        let t = ((depth * k) as f64 / 4.0).round() as usize;
        let lo = taps.last().map_or(1, |&p: &usize| p + 1);
        taps.push(t.max(lo));
    }
    taps
}

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use sha2::{Digest, Sha256};

use super::config::EncoderConfig;
use super::layers::{
    softmax_last, sigmoid, Conv, Init, LayerNorm, Linear, ParamBuilder, ProjUp, ResBlock, UpBlock,
};
use super::prob::ProbabilityPair;
use crate::error::{Error, Result};
use crate::infer::TilePredictor;

pub const ENCODER_PREFIX: &str = "image_encoder.";
pub const DECODER_PREFIX: &str = "decoder.";

struct Block {
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    lin1: Linear,
    lin2: Linear,
}

struct Encoder {
    patch_w: Var,
    patch_b: Var,
    pos_embed: Var,
    blocks: Vec<Block>,
}

struct Decoder {
    encoder1: ResBlock,
    encoder2: ProjUp,
    encoder3: ProjUp,
    encoder4: ProjUp,
    decoder5: UpBlock,
    decoder4: UpBlock,
    decoder3: UpBlock,
    decoder2: UpBlock,
    out: Conv,
}

/// ViT encoder with a UNETR-style convolutional decoder and a two-channel
/// sigmoid head.
pub struct SegModel {
    cfg: EncoderConfig,
    dtype: DType,
    vars: BTreeMap<String, Var>,
    enc: Encoder,
    dec: Decoder,
    tile_batch: usize,
}

impl std::fmt::Debug for SegModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegModel")
            .field("cfg", &self.cfg)
            .field("dtype", &self.dtype)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl SegModel {
    /// Random initialization in 32-bit floats.
    pub fn init_random(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        Self::init_random_with(cfg, seed, DType::F32)
    }

    pub fn init_random_with(cfg: &EncoderConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut pb = ParamBuilder::new(seed, dtype, BTreeMap::new());
        Self::assemble(cfg, &mut pb)
    }

    /// Builds the network, adopting tensors from `pb.source` and initializing
    /// the rest.
    pub(crate) fn assemble(cfg: &EncoderConfig, pb: &mut ParamBuilder) -> Result<Self> {
        cfg.validate()?;
        let e = cfg.embed_dim;
        let g = cfg.grid_side();
        let p = cfg.token_patch_px;
        let patch_std = (1.0 / (cfg.in_chans * p * p) as f64).sqrt();
        let patch_w = pb.get(
            "image_encoder.patch_embed.proj.weight",
            &[e, cfg.in_chans, p, p],
            Init::Normal(patch_std),
        )?;
        let patch_b = pb.get("image_encoder.patch_embed.proj.bias", &[e], Init::Zeros)?;
        let pos_embed = pb.get("image_encoder.pos_embed", &[1, g, g, e], Init::Normal(0.02))?;
        let blocks = (0..cfg.depth)
            .map(|i| {
                let n = |s: &str| format!("image_encoder.blocks.{i}.{s}");
                Ok(Block {
                    norm1: LayerNorm::new(pb, &n("norm1"), e)?,
                    qkv: Linear::new(pb, &n("attn.qkv"), e, 3 * e)?,
                    proj: Linear::new(pb, &n("attn.proj"), e, e)?,
                    norm2: LayerNorm::new(pb, &n("norm2"), e)?,
                    lin1: Linear::new(pb, &n("mlp.lin1"), e, cfg.mlp_ratio * e)?,
                    lin2: Linear::new(pb, &n("mlp.lin2"), cfg.mlp_ratio * e, e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let f = cfg.decoder_features;
        let dec = Decoder {
            encoder1: ResBlock::new(pb, "decoder.encoder1", cfg.in_chans, f)?,
            encoder2: ProjUp::new(pb, "decoder.encoder2", e, 2 * f, 2)?,
            encoder3: ProjUp::new(pb, "decoder.encoder3", e, 4 * f, 1)?,
            encoder4: ProjUp::new(pb, "decoder.encoder4", e, 8 * f, 0)?,
            decoder5: UpBlock::new(pb, "decoder.decoder5", e, 8 * f)?,
            decoder4: UpBlock::new(pb, "decoder.decoder4", 8 * f, 4 * f)?,
            decoder3: UpBlock::new(pb, "decoder.decoder3", 4 * f, 2 * f)?,
            decoder2: UpBlock::new(pb, "decoder.decoder2", 2 * f, f)?,
            out: Conv::new(pb, "decoder.out", f, 2, 1, true)?,
        };
        Ok(Self {
            cfg: cfg.clone(),
            dtype: pb.dtype,
            vars: std::mem::take(&mut pb.vars),
            enc: Encoder {
                patch_w,
                patch_b,
                pos_embed,
                blocks,
            },
            dec,
            tile_batch: 2,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Named trainable parameters, sorted by name.
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of every parameter.
    pub fn tensors(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    /// Overwrites parameters in place; every name must exist with a matching shape.
    pub fn set_tensors(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, t) in tensors {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            if var.dims() != t.dims() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?}, model expects {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values of all parameters.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, v) in &self.vars {
            h.update(name.as_bytes());
            for d in v.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            let vals: Vec<f64> = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
            for x in vals {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn set_tile_batch(&mut self, n: usize) {
        self.tile_batch = n.max(1);
    }

    /// `B×C×S×S` images in `[0,1]` to `B×2×S×S` probabilities (axon, myelin).
    /// Single-channel input is replicated when the encoder expects more channels.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let s = self.cfg.input_px;
        if h != s || w != s {
            return Err(Error::DimensionMismatch {
                context: "model input".into(),
                expected_w: s,
                expected_h: s,
                width: w,
                height: h,
            });
        }
        let x = x.to_dtype(self.dtype)?;
        let x = if c == self.cfg.in_chans {
            x
        } else if c == 1 {
            x.repeat((1, self.cfg.in_chans, 1, 1))?
        } else {
            return Err(Error::invalid(format!(
                "input has {c} channels, encoder expects {}",
                self.cfg.in_chans
            )));
        };
        let taps = self.encode(&x)?;
        let g = self.cfg.grid_side();
        let e = self.cfg.embed_dim;
        let maps: Vec<Tensor> = taps
            .iter()
            .map(|t| Ok(t.reshape((b, g, g, e))?.permute((0, 3, 1, 2))?.contiguous()?))
            .collect::<Result<_>>()?;
        let d = &self.dec;
        let enc1 = d.encoder1.forward(&x)?;
        let enc2 = d.encoder2.forward(&maps[0])?;
        let enc3 = d.encoder3.forward(&maps[1])?;
        let enc4 = d.encoder4.forward(&maps[2])?;
        let h5 = d.decoder5.forward(&maps[3], &enc4)?;
        let h4 = d.decoder4.forward(&h5, &enc3)?;
        let h3 = d.decoder3.forward(&h4, &enc2)?;
        let h2 = d.decoder2.forward(&h3, &enc1)?;
        sigmoid(&d.out.forward(&h2)?)
    }

    /// Token sequences `B×N×E` after each tap layer.
    fn encode(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let cfg = &self.cfg;
        let (b, e, g) = (x.dim(0)?, cfg.embed_dim, cfg.grid_side());
        let p = cfg.token_patch_px;
        let t = x.conv2d(self.enc.patch_w.as_tensor(), 0, p, 1, 1)?;
        let t = t.broadcast_add(&self.enc.patch_b.as_tensor().reshape((1, e, 1, 1))?)?;
        let t = t.permute((0, 2, 3, 1))?.broadcast_add(self.enc.pos_embed.as_tensor())?;
        let mut z = t.reshape((b, g * g, e))?;
        let mut taps = Vec::with_capacity(4);
        for (i, blk) in self.enc.blocks.iter().enumerate() {
            z = (&z + self.attention(blk, &blk.norm1.forward(&z)?)?)?;
            let m = blk.lin2.forward(&blk.lin1.forward(&blk.norm2.forward(&z)?)?.gelu_erf()?)?;
            z = (z + m)?;
            if cfg.tap_layers.contains(&(i + 1)) {
                taps.push(z.clone());
            }
            if taps.len() == 4 {
                break;
            }
        }
        Ok(taps)
    }

    fn attention(&self, blk: &Block, x: &Tensor) -> Result<Tensor> {
        let (b, n, e) = x.dims3()?;
        let heads = self.cfg.heads;
        let hd = e / heads;
        let qkv = blk
            .qkv
            .forward(x)?
            .reshape((b, n, 3, heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
        let a = softmax_last(&scores)?.matmul(&v)?;
        let a = a.transpose(1, 2)?.contiguous()?.reshape((b, n, e))?;
        blk.proj.forward(&a)
    }

    /// Forward on single-channel `S×S` tiles.
    pub fn predict_batch(&self, tiles: &[Vec<f32>]) -> Result<Vec<ProbabilityPair>> {
        let s = self.cfg.input_px;
        if tiles.is_empty() {
            return Ok(Vec::new());
        }
        let mut flat = Vec::with_capacity(tiles.len() * s * s);
        for t in tiles {
            if t.len() != s * s {
                return Err(Error::invalid(format!("tile of {} values, expected {}", t.len(), s * s)));
            }
            flat.extend_from_slice(t);
        }
        let x = Tensor::from_vec(flat, (tiles.len(), 1, s, s), &Device::Cpu)?;
        let y = self.forward(&x)?.to_dtype(DType::F32)?;
        (0..tiles.len())
            .map(|i| {
                let item = y.get(i)?;
                let axon: Vec<f32> = item.get(0)?.flatten_all()?.to_vec1()?;
                let myelin: Vec<f32> = item.get(1)?.flatten_all()?.to_vec1()?;
                ProbabilityPair::new(s, s, axon, myelin)
            })
            .collect()
    }
}

impl TilePredictor for SegModel {
    fn tile_px(&self) -> usize {
        self.cfg.input_px
    }

    fn predict_tiles(&self, tiles: &[Vec<f32>]) -> Result<Vec<ProbabilityPair>> {
        self.predict_batch(tiles)
    }

    fn batch_size(&self) -> usize {
        self.tile_batch
    }
}

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use candle_core::{DType, Device, Tensor};

use super::archive::Archive;
use super::config::EncoderConfig;
use super::layers::ParamBuilder;
use super::net::{SegModel, ENCODER_PREFIX};
use super::resample::resample_bicubic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiscardReason {
    PromptEncoder,
    MaskDecoder,
    Neck,
    /// An image-encoder tensor the plain encoder has no slot for
    /// (relative-position tables, blocks beyond `depth`).
    UnusedEncoderTensor,
    /// Not part of the image encoder at all.
    Foreign,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::PromptEncoder => "prompt-encoder",
            DiscardReason::MaskDecoder => "mask-decoder",
            DiscardReason::Neck => "encoder-neck",
            DiscardReason::UnusedEncoderTensor => "unused-encoder-tensor",
            DiscardReason::Foreign => "foreign",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub name: String,
    pub from: (usize, usize),
    pub to: (usize, usize),
}

/// Outcome of an import. `loaded` and `discarded` partition the checkpoint's
/// names; `missing` lists encoder parameters the checkpoint did not supply
/// (initialized fresh like the decoder).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    pub discarded: Vec<(String, DiscardReason)>,
    pub missing: Vec<String>,
    pub resampled: Option<Resampled>,
    /// Input channels summed into the single-channel patch embedding.
    pub folded_channels: Option<usize>,
}

impl LoadReport {
    pub fn discarded_names(&self) -> impl Iterator<Item = &str> {
        self.discarded.iter().map(|(n, _)| n.as_str())
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::from("LOAD-REPORT v1\n");
        let _ = writeln!(
            s,
            "counts loaded={} discarded={} missing={}",
            self.loaded.len(),
            self.discarded.len(),
            self.missing.len()
        );
        match &self.resampled {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "resampled {} {}x{} -> {}x{}",
                    r.name, r.from.0, r.from.1, r.to.0, r.to.1
                );
            }
            None => s.push_str("resampled none\n"),
        }
        if let Some(c) = self.folded_channels {
            let _ = writeln!(s, "folded_channels {c}");
        }
        for n in &self.loaded {
            let _ = writeln!(s, "loaded {n}");
        }
        for (n, r) in &self.discarded {
            let _ = writeln!(s, "discarded {n} {}", r.as_str());
        }
        for n in &self.missing {
            let _ = writeln!(s, "missing {n}");
        }
        f.write_str(&s)
    }
}

fn classify(name: &str) -> Option<DiscardReason> {
    if name.starts_with("prompt_encoder.") {
        Some(DiscardReason::PromptEncoder)
    } else if name.starts_with("mask_decoder.") {
        Some(DiscardReason::MaskDecoder)
    } else if name.starts_with("image_encoder.neck.") {
        Some(DiscardReason::Neck)
    } else if name.starts_with(ENCODER_PREFIX) {
        None
    } else {
        Some(DiscardReason::Foreign)
    }
}

/// Builds a model whose encoder comes from a promptable-segmentation
/// checkpoint. Prompt encoder, mask decoder and encoder neck are dropped;
/// the positional grid is resampled bicubically when the token grid differs;
/// a multi-channel patch embedding is folded to the configured channel count
/// by summation (equivalent to replicating a grayscale input). The decoder
/// is initialized from `seed`.
pub fn surgery_import(checkpoint: &Archive, cfg: &EncoderConfig, seed: u64) -> Result<(SegModel, LoadReport)> {
    surgery_import_with(checkpoint, cfg, seed, DType::F32)
}

pub fn surgery_import_with(
    checkpoint: &Archive,
    cfg: &EncoderConfig,
    seed: u64,
    dtype: DType,
) -> Result<(SegModel, LoadReport)> {
    cfg.validate()?;
    // Discover the model's own encoder names and shapes.
    let template = SegModel::init_random_with(cfg, seed, dtype)?;
    let shapes: BTreeMap<String, Vec<usize>> = template
        .vars()
        .iter()
        .filter(|(k, _)| k.starts_with(ENCODER_PREFIX))
        .map(|(k, v)| (k.clone(), v.dims().to_vec()))
        .collect();
    drop(template);

    // Report a width mismatch by name before any per-block shape error.
    if let Some(t) = checkpoint.tensors.get(PATCH_WEIGHT) {
        if t.dims().first() != Some(&cfg.embed_dim) {
            return Err(Error::Checkpoint(format!(
                "embed_dim mismatch: checkpoint {PATCH_WEIGHT} has shape {:?}, model embed_dim is {}",
                t.dims(),
                cfg.embed_dim
            )));
        }
    }
    let mut report = LoadReport::default();
    let mut source = BTreeMap::new();
    let mut encoder_names = 0usize;
    for (name, t) in &checkpoint.tensors {
        if let Some(reason) = classify(name) {
            report.discarded.push((name.clone(), reason));
            continue;
        }
        encoder_names += 1;
        let Some(want) = shapes.get(name) else {
            report.discarded.push((name.clone(), DiscardReason::UnusedEncoderTensor));
            continue;
        };
        let adapted = adapt(name, t, want, cfg, &mut report)?;
        source.insert(name.clone(), adapted);
        report.loaded.push(name.clone());
    }
    if encoder_names == 0 {
        return Err(Error::Checkpoint("checkpoint contains no image-encoder parameters".into()));
    }
    let mut pb = ParamBuilder::new(seed, dtype, source);
    let model = SegModel::assemble(cfg, &mut pb)?;
    report.missing = pb
        .initialized
        .iter()
        .filter(|n| n.starts_with(ENCODER_PREFIX))
        .cloned()
        .collect();
    Ok((model, report))
}

const PATCH_WEIGHT: &str = "image_encoder.patch_embed.proj.weight";
const POS_EMBED: &str = "image_encoder.pos_embed";

fn adapt(name: &str, t: &Tensor, want: &[usize], cfg: &EncoderConfig, report: &mut LoadReport) -> Result<Tensor> {
    let have = t.dims();
    let embed_axis = match name {
        PATCH_WEIGHT => Some(0),
        POS_EMBED => Some(3),
        _ => None,
    };
    if let Some(ax) = embed_axis {
        if have.len() != want.len() || have[ax] != cfg.embed_dim {
            return Err(Error::Checkpoint(format!(
                "embed_dim mismatch: checkpoint {name} has shape {have:?}, model embed_dim is {}",
                cfg.embed_dim
            )));
        }
    }
    if have == want {
        return Ok(t.clone());
    }
    match name {
        PATCH_WEIGHT if have[2..] == want[2..] && want[1] == 1 => {
            report.folded_channels = Some(have[1]);
            Ok(t.to_dtype(DType::F64)?.sum_keepdim(1)?)
        }
        POS_EMBED => {
            let (gh, gw, e) = (have[1], have[2], have[3]);
            let (oh, ow) = (want[1], want[2]);
            let data: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
            let r = resample_bicubic(&data, gh, gw, e, oh, ow);
            report.resampled = Some(Resampled {
                name: name.to_string(),
                from: (gh, gw),
                to: (oh, ow),
            });
            Ok(Tensor::from_vec(r, (1, oh, ow, e), &Device::Cpu)?)
        }
        _ => Err(Error::Checkpoint(format!(
            "{name}: checkpoint shape {have:?}, model expects {want:?}"
        ))),
    }
}

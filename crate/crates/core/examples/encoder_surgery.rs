//! Imports the image encoder of a promptable-segmentation checkpoint into a
//! semantic segmentation model at a smaller input size.
//!
//! A stand-in checkpoint is built here from a random encoder plus the parts
//! surgery throws away; pass a real `.safetensors` path to import that instead.
//!
//! cargo run --example encoder_surgery -- [checkpoint.safetensors]

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use callosum::model::{surgery_import, Archive, EncoderConfig, SegModel, ENCODER_PREFIX};

fn stand_in_checkpoint(cfg: &EncoderConfig) -> callosum::Result<Archive> {
    let donor = SegModel::init_random(cfg, 42)?;
    let mut archive = Archive::default();
    for (name, t) in donor.tensors()? {
        if name.starts_with(ENCODER_PREFIX) {
            archive.tensors.insert(name, t);
        }
    }
    let extra = Tensor::zeros((4, 4), DType::F32, &Device::Cpu)?;
    for name in [
        "prompt_encoder.point_embeddings.0.weight",
        "mask_decoder.iou_prediction_head.layers.0.weight",
        "image_encoder.neck.0.weight",
        "image_encoder.blocks.0.attn.rel_pos_h",
    ] {
        archive.tensors.insert(name.into(), extra.clone());
    }
    Ok(archive)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let donor_cfg = EncoderConfig {
        input_px: 128,
        ..EncoderConfig::toy()
    };
    let checkpoint = match std::env::args().nth(1) {
        Some(p) => Archive::load(Path::new(&p))?,
        None => stand_in_checkpoint(&donor_cfg)?,
    };
    // Half the donor's input size: the positional grid is resampled.
    let cfg = EncoderConfig {
        input_px: 64,
        ..donor_cfg
    };
    let (model, report) = surgery_import(&checkpoint, &cfg, 0)?;
    print!("{report}");
    println!("model fingerprint {}", &model.fingerprint()?[..16]);
    Ok(())
}

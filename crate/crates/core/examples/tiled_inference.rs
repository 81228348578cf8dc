//! Sliding-window inference over an image larger than the model input, with
//! overlapping tiles blended by a smooth window.
//!
//! cargo run --release --example tiled_inference

use callosum::evaluate::miou;
use callosum::infer::{plan_tiles, predict_image, FloatImage};
use callosum::model::{EncoderConfig, SegModel};
use callosum::synthgen::{generate_scene, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = generate_scene(&SyntheticSceneSpec {
        patch_px: 200,
        fiber_count: 6,
        seed: 3,
        ..Default::default()
    })?;
    let image = FloatImage::from_gray(&scene.image);
    let model = SegModel::init_random(
        &EncoderConfig {
            input_px: 64,
            ..EncoderConfig::toy()
        },
        0,
    )?;
    for stride in [64, 48, 32] {
        let plan = plan_tiles(image.width, image.height, 64, stride)?;
        let prob = predict_image(&model, &image, &plan)?;
        let mask = prob.to_class_mask(0.5)?;
        // An untrained model: the score only shows the plumbing runs end to end.
        let r = miou(&mask, &scene.mask)?;
        println!(
            "stride {stride:>2}: {:>3} tiles, padded {}, mIoU {:.4} (untrained)",
            plan.tile_count(),
            plan.is_padded(),
            r.miou()
        );
    }
    Ok(())
}

//! Trains a small segmentation model on synthetic patches and reports
//! validation mIoU at each checkpoint.
//!
//! cargo run --release --example train_from_scratch -- [steps]

use callosum::infer::FloatImage;
use callosum::model::{EncoderConfig, SegModel};
use callosum::synthgen::{generate_scene, SyntheticSceneSpec};
use callosum::train::{train_loop, Sample, TrainConfig, TrainOptions};

fn samples(seeds: std::ops::Range<u64>) -> callosum::Result<Vec<Sample>> {
    seeds
        .map(|seed| {
            let scene = generate_scene(&SyntheticSceneSpec {
                patch_px: 64,
                fiber_count: 2,
                inner_radius_range: (4.0, 8.0),
                g_ratio_range: (0.55, 0.7),
                seed,
                ..Default::default()
            })?;
            Sample::new(format!("scene-{seed}"), FloatImage::from_gray(&scene.image), scene.mask)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map_or(Ok(60), |s| s.parse())?;
    let cfg = EncoderConfig {
        input_px: 64,
        decoder_features: 4,
        ..EncoderConfig::toy()
    };
    let mut model = SegModel::init_random(&cfg, 1)?;
    println!("{} parameters", model.parameter_count());

    let train = samples(0..8)?;
    let val = samples(100..102)?;
    let tc = TrainConfig {
        total_steps: steps,
        batch_size: 2,
        checkpoint_every: (steps / 4).max(1),
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let state = train_loop(
        &mut model,
        &train,
        &val,
        &tc,
        None,
        TrainOptions {
            log: Some(&mut log),
            ..Default::default()
        },
    )?;
    for (step, miou) in &state.evaluations {
        println!("step {step:>5}: val mIoU {miou:.4}");
    }
    println!("last loss {:.5}", state.last_loss.unwrap_or(f64::NAN));
    print!("{}", String::from_utf8_lossy(&log).lines().last().map_or(String::new(), |l| format!("last log line: {l}\n")));
    Ok(())
}

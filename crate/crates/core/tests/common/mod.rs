#![allow(dead_code)]

use std::path::Path;

use callosum::cli::main_with_args;
use callosum::infer::FloatImage;
use callosum::model::EncoderConfig;
use callosum::synthgen::{generate_scene, SyntheticSceneSpec};
use callosum::train::Sample;

/// Small scene used by the quick training tests: two fibers with sheaths at
/// least two pixels thick.
pub fn small_spec(patch_px: u32, seed: u64) -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        patch_px,
        fiber_count: (patch_px / 24).max(2),
        inner_radius_range: (4.0, 8.0),
        g_ratio_range: (0.55, 0.7),
        seed,
        ..Default::default()
    }
}

pub fn samples(patch_px: u32, seeds: std::ops::Range<u64>) -> Vec<Sample> {
    seeds
        .map(|s| {
            let sc = generate_scene(&small_spec(patch_px, s)).unwrap();
            Sample::new(format!("s{s}"), FloatImage::from_gray(&sc.image), sc.mask).unwrap()
        })
        .collect()
}

/// Toy encoder shrunk to a 64 px input and a narrow decoder.
pub fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        input_px: 64,
        decoder_features: 4,
        ..EncoderConfig::toy()
    }
}

/// Runs the CLI in-process; returns the exit code and captured stdout.
pub fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["callosum"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synth TOML for a grid of small 64 px patches.
pub fn small_grid_toml(nx: u32, ny: u32, seed: u64) -> String {
    format!(
        "grid_nx = {nx}\ngrid_ny = {ny}\npixel_nm = 4.0\nseed = {seed}\n\n[scene]\npatch_px = 64\nfiber_count = 2\ninner_radius_range = [4.0, 8.0]\ng_ratio_range = [0.55, 0.7]\n"
    )
}

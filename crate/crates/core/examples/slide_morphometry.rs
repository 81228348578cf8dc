//! Slide-level morphometry on a synthetic mosaic: re-grid the labels, compute
//! per-cell axon diameter, density, volume fractions and aggregate g-ratio,
//! and render the distribution maps.
//!
//! cargo run --example slide_morphometry -- [out_dir]

use std::path::PathBuf;

use callosum::dataset::RoiMask;
use callosum::morphometry::{render_maps, slide_morphometry, MetricGridSpec};
use callosum::synthgen::{generate_mosaic, SceneGrid, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), PathBuf::from);
    // Thicker sheaths toward the bottom of the slide.
    let mut grid = SceneGrid::uniform(4, 4, 4.0, &SyntheticSceneSpec { patch_px: 128, fiber_count: 4, seed: 11, ..Default::default() });
    for iy in 0..4 {
        for ix in 0..4 {
            let lo = 0.8 - 0.08 * f64::from(iy);
            grid.spec_mut(ix, iy).g_ratio_range = (lo - 0.05, lo);
        }
    }
    let mosaic = generate_mosaic(&grid, &out.join("mosaic"))?;
    let spec = MetricGridSpec {
        metric_patch_px: 64,
        downsample_factor: 2,
        ..Default::default()
    };
    let (gx, gy) = spec.grid_dims(&mosaic.manifest);
    let slide = slide_morphometry(&mosaic.manifest, &spec, &RoiMask::all_inside(gx, gy))?;
    println!("metric grid {gx}x{gy} at {} nm/px", spec.metric_pixel_nm(&mosaic.manifest));
    for y in 0..gy {
        let row: Vec<String> = (0..gx)
            .map(|x| slide.record(x, y).g_ratio.map_or("  -  ".into(), |g| format!("{g:.3}")))
            .collect();
        println!("g-ratio row {y}: {}", row.join(" "));
    }
    let written = render_maps(&slide, &out.join("maps"))?;
    println!("{}", slide.summary_line());
    println!("wrote {} files to {}", written.len(), out.join("maps").display());
    Ok(())
}

//! Human-in-the-loop annotation: starting from a few annotated rows, predict
//! the next band, "proofread" it, and commit it until the mosaic is done.
//!
//! The predictor here is a per-pixel intensity rule that happens to be exact
//! on noise-free synthetic scenes; any [`TilePredictor`] (such as a trained
//! `SegModel`) plugs in the same way. Proofreading is simulated by accepting
//! the predictions unchanged.
//!
//! cargo run --example band_expansion -- [work_dir]

use std::path::PathBuf;

use callosum::dataset::MosaicManifest;
use callosum::infer::{expand_band, ingest_corrections, BandState, ExpandOptions, TilePredictor, CORRECTED_DIR, PREDICTED_DIR};
use callosum::model::ProbabilityPair;
use callosum::synthgen::{generate_mosaic, SceneGrid, SyntheticSceneSpec};

struct IntensityRule;

impl TilePredictor for IntensityRule {
    fn tile_px(&self) -> usize {
        64
    }

    fn predict_tiles(&self, tiles: &[Vec<f32>]) -> callosum::Result<Vec<ProbabilityPair>> {
        tiles
            .iter()
            .map(|t| {
                let axon = t.iter().map(|&v| f32::from(v > 0.6)).collect();
                let myelin = t.iter().map(|&v| f32::from(v < 0.3)).collect();
                ProbabilityPair::new(64, 64, axon, myelin)
            })
            .collect()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let work = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), PathBuf::from);
    let grid = SceneGrid::uniform(
        3,
        6,
        4.0,
        &SyntheticSceneSpec {
            patch_px: 64,
            fiber_count: 2,
            inner_radius_range: (4.0, 8.0),
            noise_level: 0.0,
            seed: 5,
            ..Default::default()
        },
    );
    let mosaic = generate_mosaic(&grid, &work.join("mosaic"))?;
    let manifest_path = mosaic.manifest_path;
    let mut manifest = mosaic.manifest;
    // Keep only the first row annotated; the rest are withheld.
    for iy in 1..grid.grid_ny {
        for ix in 0..grid.grid_nx {
            let e = manifest.get_mut(ix, iy).expect("in grid");
            e.annotated = false;
            e.label_path = None;
        }
    }
    manifest.save(&manifest_path)?;

    let bands = work.join("bands");
    let mut state = BandState::from_manifest(&manifest)?;
    loop {
        let (next, export) = expand_band(&state, &IntensityRule, &manifest, 2, &bands, &ExpandOptions::default())?;
        let (Some(dir), Some(info)) = (export.band_dir, export.info) else {
            break;
        };
        println!("band {}: rows {:?}, {} predictions", info.iteration, info.y_range, export.files.len());
        for e in std::fs::read_dir(dir.join(PREDICTED_DIR))? {
            let p = e?.path();
            std::fs::copy(&p, dir.join(CORRECTED_DIR).join(p.file_name().expect("file")))?;
        }
        state = ingest_corrections(&next, &mut manifest, &manifest_path, &dir.join(CORRECTED_DIR))?;
        println!("  annotated rows now {:?}", state.annotated);
    }
    let done = MosaicManifest::load(&manifest_path)?;
    println!("{} of {} patches annotated", done.entries().values().filter(|e| e.annotated).count(), done.len());
    Ok(())
}

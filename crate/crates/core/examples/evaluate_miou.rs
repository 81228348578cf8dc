//! Scores predictions against ground truth and prints the benchmark table.
//!
//! cargo run --example evaluate_miou

use callosum::dataset::ClassMask;
use callosum::evaluate::{benchmark_report, IoUAccumulator, LocalResult, REFERENCE_RESULTS};
use callosum::synthgen::{generate_scene, SyntheticSceneSpec};

/// Peels one pixel off every axon boundary: a prediction that is slightly too small.
fn erode_axon(gt: &ClassMask) -> ClassMask {
    let (w, h) = (gt.width(), gt.height());
    let v = gt.values();
    let mut out = v.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let edge = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || v[ny as usize * w + nx as usize] != v[i]
            });
            if v[i] == callosum::dataset::AXON && edge {
                out[i] = callosum::dataset::MYELIN;
            }
        }
    }
    ClassMask::from_vec(w, h, out).expect("same shape")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut exact = IoUAccumulator::new("synthetic");
    let mut eroded = IoUAccumulator::new("synthetic");
    for seed in 0..4 {
        let gt = generate_scene(&SyntheticSceneSpec {
            patch_px: 128,
            seed,
            ..Default::default()
        })?
        .mask;
        exact.add(&gt, &gt)?;
        eroded.add(&erode_axon(&gt), &gt)?;
    }
    let rows = [
        LocalResult::from_report("ground truth", &exact.report()),
        LocalResult::from_report("eroded axons", &eroded.report()),
    ];
    print!("{}", benchmark_report(&rows, &REFERENCE_RESULTS));
    Ok(())
}

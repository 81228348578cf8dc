use std::collections::VecDeque;

use proptest::prelude::*;

use callosum::dataset::{read_label, ClassMask, MosaicManifest, RoiMask, AXON, MYELIN};
use callosum::morphometry::{
    distribution_map, equivalent_diameter, parse_raw_csv, patch_metrics_with, raw_csv, render_maps,
    slide_morphometry, MapMetric, MetricGridSpec, RAW_FILE, SUMMARY_FILE,
};
use callosum::synthgen::{generate_mosaic, SceneGrid, SyntheticSceneSpec};
use callosum::Error;

/// Areas of the 8-connected axon components, by breadth-first flood fill.
fn axon_areas(w: usize, h: usize, vals: &[u8]) -> Vec<u64> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || vals[start] != AXON {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && vals[j] == AXON {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(area);
    }
    out
}

/// The whole slide's labels at the native pitch, stitched row-major.
fn stitched(manifest: &MosaicManifest) -> (usize, usize, Vec<u8>) {
    let p = manifest.patch_px as usize;
    let (w, h) = (manifest.grid_nx as usize * p, manifest.grid_ny as usize * p);
    let mut out = vec![0u8; w * h];
    for iy in 0..manifest.grid_ny {
        for ix in 0..manifest.grid_nx {
            let m = read_label(manifest, ix, iy).unwrap();
            for y in 0..p {
                for x in 0..p {
                    out[(iy as usize * p + y) * w + ix as usize * p + x] = m.get(x, y);
                }
            }
        }
    }
    (w, h, out)
}

/// Block majority vote, ties to the higher class.
fn vote(w: usize, h: usize, vals: &[u8], f: usize) -> (usize, usize, Vec<u8>) {
    let (ow, oh) = (w / f, h / f);
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            let mut counts = [0usize; 3];
            for y in 0..f {
                for x in 0..f {
                    counts[vals[(by * f + y) * w + bx * f + x] as usize] += 1;
                }
            }
            out.push((0..3u8).max_by_key(|&c| (counts[c as usize], c)).unwrap());
        }
    }
    (ow, oh, out)
}

#[test]
fn slide_metrics_match_a_from_scratch_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let grid = SceneGrid::uniform(
        3,
        2,
        4.0,
        &SyntheticSceneSpec {
            patch_px: 64,
            fiber_count: 3,
            inner_radius_range: (4.0, 8.0),
            g_ratio_range: (0.55, 0.7),
            seed: 19,
            ..Default::default()
        },
    );
    let mosaic = generate_mosaic(&grid, dir.path()).unwrap();
    let spec = MetricGridSpec {
        metric_patch_px: 20,
        downsample_factor: 2,
        min_component_area: 3,
    };
    // 96 x 64 downsampled pixels in 20 px cells: 5 x 4 cells, the last row and column clipped.
    assert_eq!(spec.grid_dims(&mosaic.manifest), (5, 4));
    let mut cells = vec![true; 20];
    cells[0] = false;
    cells[13] = false;
    let roi = RoiMask::from_cells(5, 4, cells).unwrap();
    let slide = slide_morphometry(&mosaic.manifest, &spec, &roi).unwrap();
    assert_eq!(slide.metric_pixel_nm, 8.0);
    assert_eq!(slide.roi_cells(), 18);

    let (w, h, native) = stitched(&mosaic.manifest);
    let (dw, dh, small) = vote(w, h, &native, 2);
    assert_eq!((dw, dh), (96, 64));
    for gy in 0..4 {
        for gx in 0..5 {
            let rec = slide.record(gx, gy);
            let (x0, y0) = (gx * 20, gy * 20);
            let (cw, ch) = (20.min(dw - x0), 20.min(dh - y0));
            assert_eq!(rec.area_px, (cw * ch) as u64);
            if !roi.inside(gx, gy) {
                assert!(!rec.roi && rec.g_ratio.is_none() && rec.density == 0);
                continue;
            }
            let crop: Vec<u8> = (0..ch)
                .flat_map(|y| small[(y0 + y) * dw + x0..(y0 + y) * dw + x0 + cw].to_vec())
                .collect();
            let n = crop.len() as f64;
            let avf = crop.iter().filter(|&&v| v == AXON).count() as f64 / n;
            let mvf = crop.iter().filter(|&&v| v == MYELIN).count() as f64 / n;
            assert!((rec.avf - avf).abs() < 1e-15 && (rec.mvf - mvf).abs() < 1e-15);
            let kept: Vec<f64> = axon_areas(cw, ch, &crop)
                .into_iter()
                .filter(|&a| a >= 3)
                .map(|a| (4.0 * a as f64 / std::f64::consts::PI).sqrt())
                .collect();
            assert_eq!(rec.density as usize, kept.len(), "cell ({gx}, {gy})");
            if kept.is_empty() {
                assert!(rec.diam_mean.is_none());
            } else {
                let mean = kept.iter().sum::<f64>() / kept.len() as f64;
                assert!((rec.diam_mean.unwrap() - mean).abs() < 1e-12);
                assert!((rec.diam_mean_nm(8.0).unwrap() - 8.0 * mean).abs() < 1e-9);
            }
            match rec.g_ratio {
                Some(g) => assert!((g - (avf / (avf + mvf)).sqrt()).abs() < 1e-12),
                None => assert_eq!(avf, 0.0),
            }
        }
    }
}

#[test]
fn unlabelled_roi_cells_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let grid = SceneGrid::uniform(
        4,
        2,
        4.0,
        &SyntheticSceneSpec {
            patch_px: 32,
            fiber_count: 1,
            inner_radius_range: (4.0, 5.0),
            ..Default::default()
        },
    );
    let mut manifest = generate_mosaic(&grid, dir.path()).unwrap().manifest;
    for (ix, iy) in [(1, 0), (3, 1)] {
        manifest.get_mut(ix, iy).unwrap().annotated = false;
    }
    let spec = MetricGridSpec {
        metric_patch_px: 32,
        downsample_factor: 1,
        min_component_area: 1,
    };
    match slide_morphometry(&manifest, &spec, &RoiMask::all_inside(4, 2)) {
        Err(Error::MissingLabels(c)) => assert_eq!(c, vec![(1, 0), (3, 1)]),
        other => panic!("expected MissingLabels, got {other:?}"),
    }
    // Outside the ROI a missing label is fine.
    let cells = (0..8).map(|i| i != 1 && i != 7).collect();
    let slide = slide_morphometry(&manifest, &spec, &RoiMask::from_cells(4, 2, cells).unwrap()).unwrap();
    assert_eq!(slide.roi_cells(), 6);
    assert!(slide_morphometry(&manifest, &spec, &RoiMask::all_inside(3, 2)).is_err());
    let bad = MetricGridSpec {
        downsample_factor: 5,
        ..spec
    };
    assert!(slide_morphometry(&manifest, &bad, &RoiMask::all_inside(4, 2)).is_err());
}

#[test]
fn full_slide_metric_grid() {
    let m = MosaicManifest::new(448, 1408, 1024, 4.0).unwrap();
    let spec = MetricGridSpec::default();
    assert_eq!(spec.grid_dims(&m), (112, 352));
    assert_eq!(spec.metric_pixel_nm(&m), 16.0);
}

proptest! {
    #[test]
    fn grid_dims_are_ceilings(
        nx in 1u32..2000,
        ny in 1u32..2000,
        patch_units in 1u32..64,
        factor in 1u32..8,
        metric in 1u32..5000,
    ) {
        let m = MosaicManifest::new(nx, ny, patch_units * factor, 4.0).unwrap();
        let spec = MetricGridSpec { metric_patch_px: metric, downsample_factor: factor, min_component_area: 4 };
        let (gx, gy) = spec.grid_dims(&m);
        let ext_x = (nx * patch_units) as usize;
        let ext_y = (ny * patch_units) as usize;
        let metric = metric as usize;
        prop_assert!(gx * metric >= ext_x && (gx - 1) * metric < ext_x);
        prop_assert!(gy * metric >= ext_y && (gy - 1) * metric < ext_y);
    }

    #[test]
    fn g_ratio_identity_on_any_mask(w in 1usize..24, h in 1usize..24, seed in any::<u64>()) {
        let vals: Vec<u8> = (0..w * h).map(|i| (seed.rotate_left(i as u32 * 7 % 64) % 3) as u8).collect();
        let mask = ClassMask::from_vec(w, h, vals.clone()).unwrap();
        let r = patch_metrics_with(&mask, true, 1);
        let a = vals.iter().filter(|&&v| v == AXON).count() as f64;
        let my = vals.iter().filter(|&&v| v == MYELIN).count() as f64;
        match r.g_ratio {
            Some(g) => prop_assert!((g - (a / (a + my)).sqrt()).abs() < 1e-12),
            None => prop_assert_eq!(a, 0.0),
        }
        let mut areas = axon_areas(w, h, &vals);
        areas.sort_unstable();
        prop_assert_eq!(r.density as usize, areas.len());
        if let Some(d) = r.diam_mean {
            let mean = areas.iter().map(|&x| equivalent_diameter(x).unwrap()).sum::<f64>() / areas.len() as f64;
            prop_assert!((d - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn annulus_g_ratio_is_radius_ratio() {
    // Discrete disk and ring: g = r/R up to pixelization, which is under 1% at these radii.
    let (n, r, big_r) = (101usize, 20.0f64, 32.0f64);
    let c = n as f64 / 2.0;
    let vals: Vec<u8> = (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 + 0.5 - c, (i / n) as f64 + 0.5 - c);
            let d = (x * x + y * y).sqrt();
            if d < r {
                AXON
            } else if d < big_r {
                MYELIN
            } else {
                0
            }
        })
        .collect();
    let rec = patch_metrics_with(&ClassMask::from_vec(n, n, vals).unwrap(), true, 4);
    assert_eq!(rec.density, 1);
    assert!((rec.g_ratio.unwrap() - r / big_r).abs() < 0.01);
    assert!((rec.diam_mean.unwrap() / (2.0 * r) - 1.0).abs() < 0.01, "{rec:?}");
}

#[test]
fn maps_and_raw_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = SceneGrid::uniform(
        2,
        2,
        4.0,
        &SyntheticSceneSpec {
            patch_px: 64,
            fiber_count: 2,
            inner_radius_range: (4.0, 8.0),
            g_ratio_range: (0.55, 0.7),
            seed: 5,
            ..Default::default()
        },
    );
    let manifest = generate_mosaic(&grid, &dir.path().join("m")).unwrap().manifest;
    let spec = MetricGridSpec {
        metric_patch_px: 32,
        downsample_factor: 1,
        min_component_area: 4,
    };
    let roi = RoiMask::from_cells(4, 4, (0..16).map(|i| i % 5 != 0).collect()).unwrap();
    let slide = slide_morphometry(&manifest, &spec, &roi).unwrap();
    let out = dir.path().join("maps");
    let written = render_maps(&slide, &out).unwrap();
    assert_eq!(written.len(), 6 * 2 + 2);

    let text = std::fs::read_to_string(out.join(RAW_FILE)).unwrap();
    let back = parse_raw_csv(&text, slide.metric_pixel_nm).unwrap();
    assert_eq!((back.gx, back.gy), (4, 4));
    assert_eq!(raw_csv(&back), text);
    for (a, b) in back.records.iter().zip(&slide.records) {
        assert_eq!(a.roi, b.roi);
        assert_eq!(a.density, b.density);
        for (x, y) in [(a.avf, b.avf), (a.mvf, b.mvf)] {
            // Six decimals in the table.
            assert!((x - y).abs() <= 5e-7 + 1e-12, "{x} {y}");
        }
    }
    let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    assert!(summary.starts_with("SLIDE-SUMMARY v1 mean_g_ratio="));
    assert!(summary.contains("roi_cells=12"));

    for metric in MapMetric::ALL {
        let map = distribution_map(&slide, metric).unwrap();
        let png = image::open(out.join(format!("{}.png", metric.name()))).unwrap().to_luma8();
        assert_eq!(png.dimensions(), (4, 4));
        let defined: Vec<f64> = map.normalized.iter().flatten().copied().collect();
        let (lo, hi) = defined.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo == 0.0 && (hi == 1.0 || hi == 0.0), "{}", metric.name());
        for (i, n) in map.normalized.iter().enumerate() {
            let want = n.map_or(0, |v| (255.0 * v).round() as u8);
            assert_eq!(png.as_raw()[i], want);
            assert_eq!(n.is_some(), map.raw[i].is_some());
        }
        assert!(map.raw[0].is_none() && map.raw[5].is_none());
    }
}

#[test]
fn background_only_slide_renders_blank_maps() {
    let dir = tempfile::tempdir().unwrap();
    let grid = SceneGrid::uniform(
        2,
        1,
        4.0,
        &SyntheticSceneSpec {
            patch_px: 32,
            fiber_count: 0,
            ..Default::default()
        },
    );
    let manifest = generate_mosaic(&grid, &dir.path().join("m")).unwrap().manifest;
    let spec = MetricGridSpec {
        metric_patch_px: 32,
        downsample_factor: 1,
        min_component_area: 4,
    };
    let slide = slide_morphometry(&manifest, &spec, &RoiMask::all_inside(2, 1)).unwrap();
    for r in &slide.records {
        assert_eq!((r.density, r.avf, r.mvf), (0, 0.0, 0.0));
        assert!(r.g_ratio.is_none() && r.diam_mean.is_none() && r.diam_std.is_none());
    }
    assert!(slide.mean_g_ratio().is_none());
    assert!(distribution_map(&slide, MapMetric::GRatio).is_err());
    assert_eq!(distribution_map(&slide, MapMetric::Density).unwrap().normalized, vec![Some(0.0); 2]);
    let out = dir.path().join("maps");
    render_maps(&slide, &out).unwrap();
    let g = image::open(out.join("g_ratio.png")).unwrap().to_luma8();
    assert!(g.as_raw().iter().all(|&v| v == 0));
    let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.trim(), "SLIDE-SUMMARY v1 mean_g_ratio=- roi_cells=2");
}

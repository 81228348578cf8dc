//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with timings.
//! The lines go straight to stderr so they show without `--nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use callosum::dataset::{read_label_file, ClassMask, MosaicManifest, RoiMask, AXON, MYELIN};
use callosum::evaluate::{iou_class, miou};
use callosum::infer::{
    plan_tiles, predict_image, BandState, FloatImage, TilePredictor, CORRECTED_DIR, PREDICTED_DIR,
};
use callosum::model::{
    surgery_import, Archive, DiscardReason, EncoderConfig, ProbabilityPair, SegModel, ENCODER_PREFIX,
};
use callosum::morphometry::{equivalent_diameter, g_ratio, label_components, slide_morphometry, MetricGridSpec};
use callosum::synthgen::{generate_mosaic, SceneGrid, SyntheticSceneSpec};
use callosum::train::{bce_loss, lr_at, train_loop, TrainConfig, TrainOptions, BCE_EPS};

use common::{cli, p, samples, small_grid_toml, tiny_config};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. Formula oracles -------------------------------------------------------

/// Diameter of the equal-area circle found by bisection on πr² = area.
fn diameter_by_bisection(area: u64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, area as f64 + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if PI * mid * mid < area as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

fn bce_brute(pred: &[f64], target: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let p = p.max(BCE_EPS).min(1.0 - BCE_EPS);
        sum -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    sum / pred.len() as f64
}

fn iou_brute(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    let a: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == class).collect();
    let b: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == class).collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1000;
    let mut worst = [0f64; 4];
    for _ in 0..n {
        let area = rng.random_range(1..2_000_000u64);
        let d = equivalent_diameter(area).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max((d - diameter_by_bisection(area)).abs());

        let len = rng.random_range(1..48usize);
        let pred: Vec<f64> = (0..len)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>(),
            })
            .collect();
        let target: Vec<f64> = (0..len)
            .map(|_| if rng.random_bool(0.8) { rng.random_range(0..2) as f64 } else { rng.random::<f64>() })
            .collect();
        let pt = Tensor::from_vec(pred.clone(), (1, 1, len), &Device::Cpu).unwrap();
        let tt = Tensor::from_vec(target.clone(), (1, 1, len), &Device::Cpu).unwrap();
        let l = bce_loss(&pt, &tt).unwrap().to_scalar::<f64>().unwrap();
        worst[1] = worst[1].max((l - bce_brute(&pred, &target)).abs());

        let (w, h) = (rng.random_range(1..10usize), rng.random_range(1..10usize));
        let pv: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..3)).collect();
        let gv: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..3)).collect();
        let pm = ClassMask::from_vec(w, h, pv.clone()).unwrap();
        let gm = ClassMask::from_vec(w, h, gv.clone()).unwrap();
        let ia = iou_brute(&pv, &gv, AXON);
        let im = iou_brute(&pv, &gv, MYELIN);
        let rep = miou(&pm, &gm).unwrap();
        worst[2] = worst[2]
            .max((iou_class(&pm, &gm, AXON).unwrap() - ia).abs())
            .max((iou_class(&pm, &gm, MYELIN).unwrap() - im).abs())
            .max((rep.miou() - 0.5 * (ia + im)).abs());

        // A single annulus: AVF and MVF from the exact areas give back r/R.
        let r = rng.random_range(0.1..50.0f64);
        let big_r = r / rng.random_range(0.05..0.99f64);
        let cell = rng.random_range(1.0..4.0) * (2.0 * big_r).powi(2);
        let avf = PI * r * r / cell;
        let mvf = PI * (big_r * big_r - r * r) / cell;
        let g = g_ratio(avf, mvf).ok_or("g-ratio undefined")?;
        worst[3] = worst[3].max((g - r / big_r).abs());
    }
    check(worst[0] < 1e-10, || format!("equivalent_diameter off by {:e}", worst[0]))?;
    check(worst[1] < 1e-10, || format!("bce_loss off by {:e}", worst[1]))?;
    check(worst[2] < 1e-10, || format!("IoU off by {:e}", worst[2]))?;
    check(worst[3] < 1e-12, || format!("g-ratio identity off by {:e}", worst[3]))?;
    Ok(format!(
        "{n} instances; max errors diam {:.1e}, bce {:.1e}, iou {:.1e}, g {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// 2. Connected components ------------------------------------------------------

/// Breadth-first flood fill under 8-connectivity; returns sorted areas.
fn flood_fill_areas(mask: &ClassMask, class: u8) -> Vec<u64> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut areas = Vec::new();
    for start in 0..(w * h) {
        if seen[start as usize] || mask.values()[start as usize] != class {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % w, i / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if !seen[j] && mask.values()[j] == class {
                        seen[j] = true;
                        queue.push_back(j as i64);
                    }
                }
            }
        }
        areas.push(area);
    }
    areas.sort_unstable();
    areas
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0;
    for k in 0..500 {
        let density = rng.random_range(0.05..0.95f64);
        // Even masks are binary, odd masks use all three classes.
        let vals: Vec<u8> = (0..32 * 32)
            .map(|_| match (rng.random_bool(density), k % 2) {
                (true, _) => AXON,
                (false, 0) => 0,
                (false, _) => rng.random_range(0..3u8),
            })
            .collect();
        let mask = ClassMask::from_vec(32, 32, vals).unwrap();
        for class in [AXON, MYELIN] {
            let c = label_components(&mask, class);
            let mut got = c.areas.clone();
            got.sort_unstable();
            let want = flood_fill_areas(&mask, class);
            check(got == want, || format!("mask {k} class {class}: {got:?} vs {want:?}"))?;
            total += want.len();
        }
    }
    Ok(format!("500 masks, {total} components agree"))
}

// 3. Generator round-trip ------------------------------------------------------

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    // The aggregate g-ratio 1/√(1 + MVF/AVF) assumes circular profiles; an
    // elongated profile's area ratio tends to r/R instead of (r/R)², so only
    // circular, fully myelinated fibers have an unambiguous truth.
    let base = SyntheticSceneSpec {
        patch_px: 512,
        fiber_count: 8,
        elongation_prob: 0.0,
        node_prob: 0.0,
        demyelination_prob: 0.0,
        seed: 33,
        ..Default::default()
    };
    let grid = SceneGrid::uniform(4, 4, 4.0, &base);
    let mosaic = generate_mosaic(&grid, dir.path()).map_err(|e| e.to_string())?;
    let manifest = MosaicManifest::load(&mosaic.manifest_path).map_err(|e| e.to_string())?;
    let spec = MetricGridSpec {
        metric_patch_px: 512,
        downsample_factor: 1,
        ..Default::default()
    };
    let slide = slide_morphometry(&manifest, &spec, &RoiMask::all_inside(4, 4)).map_err(|e| e.to_string())?;
    let mut worst_diam = 0f64;
    let mut truth_sum = 0.0;
    for ((ix, iy), fibers) in &mosaic.fibers {
        let rec = slide.record(*ix as usize, *iy as usize);
        check(rec.density as usize == fibers.len(), || {
            format!("patch ({ix}, {iy}): density {} vs {} fibers", rec.density, fibers.len())
        })?;
        let analytic = fibers.iter().map(|f| f.analytic_equivalent_diameter()).sum::<f64>() / fibers.len() as f64;
        let measured = rec.diam_mean.ok_or("no diameter")?;
        worst_diam = worst_diam.max((measured - analytic).abs() / analytic);
        let wsum: f64 = fibers.iter().map(|f| f.fiber_area_px() as f64).sum();
        truth_sum += fibers.iter().map(|f| f.fiber_area_px() as f64 * f.g_ratio()).sum::<f64>() / wsum;
    }
    let truth = truth_sum / mosaic.fibers.len() as f64;
    let mean_g = slide.mean_g_ratio().ok_or("no g-ratio")?;
    check(worst_diam < 0.03, || format!("diam_mean off by {:.2}%", 100.0 * worst_diam))?;
    check((mean_g - truth).abs() < 0.02, || format!("mean g {mean_g:.4} vs truth {truth:.4}"))?;
    Ok(format!(
        "16 patches; max diam error {:.2}%, mean g {mean_g:.4} vs truth {truth:.4}",
        100.0 * worst_diam
    ))
}

// 4. Schedule ------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let cfg = TrainConfig {
        total_steps: 1000,
        warmup_steps: Some(100),
        base_lr: 0.01,
        min_lr: 0.0,
        ..Default::default()
    };
    let s = cfg.schedule();
    let eps = 1e-9;
    let jump = (s.lr(100.0 - eps) - s.lr(100.0 + eps)).abs();
    check(jump < 1e-12, || format!("warmup boundary jump {jump:e}"))?;
    let mut prev = f64::INFINITY;
    for k in 0..=10_000 {
        let t = 100.0 + 900.0 * k as f64 / 10_000.0;
        let v = s.lr(t);
        check(v <= prev, || format!("lr rises at t={t}: {prev} -> {v}"))?;
        prev = v;
    }
    let mid = lr_at(&cfg, 550).map_err(|e| e.to_string())?;
    check((mid - 0.005).abs() < 1e-15, || format!("lr(550) = {mid}"))?;
    Ok(format!("jump {jump:.1e}, 10^4 samples non-increasing, lr(550) = {mid}"))
}

// 5. Gradient check --------------------------------------------------------------

fn criterion_5() -> Outcome {
    let cfg = EncoderConfig::toy();
    let model = SegModel::init_random_with(&cfg, 5, DType::F64).map_err(|e| e.to_string())?;
    let scene = callosum::synthgen::generate_scene(&SyntheticSceneSpec {
        patch_px: 224,
        seed: 5,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let img = FloatImage::from_gray(&scene.image);
    let x = Tensor::from_vec(img.data.iter().map(|&v| v as f64).collect::<Vec<_>>(), (1, 1, 224, 224), &Device::Cpu)
        .unwrap();
    let (ta, tm) = callosum::model::targets_from_mask(&scene.mask);
    let t: Vec<f64> = ta.into_iter().chain(tm).map(f64::from).collect();
    let t = Tensor::from_vec(t, (1, 2, 224, 224), &Device::Cpu).unwrap();
    let loss_of = || -> f64 {
        bce_loss(&model.forward(&x).unwrap(), &t).unwrap().to_scalar::<f64>().unwrap()
    };
    let loss = bce_loss(&model.forward(&x).unwrap(), &t).unwrap();
    let grads = loss.backward().unwrap();

    // Forward roundoff puts ~1e-15 of noise on the loss and leaky-ReLU kinks
    // bias large steps, so the step is scaled per element to keep the
    // difference quotient's noise near 1e-5 of the gradient it checks.
    // The floor only matters for exactly-zero gradients (key biases).
    let names: Vec<&String> = model.vars().keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let floor = 1e-9;
    let mut worst = (0f64, String::new());
    for _ in 0..100 {
        let name = names[rng.random_range(0..names.len())];
        let var = &model.vars()[name];
        let shape = var.as_tensor().shape().clone();
        let orig: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let i = rng.random_range(0..orig.len());
        let analytic: f64 = grads.get(var.as_tensor()).ok_or(format!("no gradient for {name}"))?
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap()[i];
        let h = (1e-10 / analytic.abs()).clamp(1e-7, 1e-2);
        let probe = |delta: f64| {
            let mut v = orig.clone();
            v[i] += delta;
            var.set(&Tensor::from_vec(v, &shape, &Device::Cpu).unwrap()).unwrap();
            loss_of()
        };
        let numeric = (probe(h) - probe(-h)) / (2.0 * h);
        var.set(&Tensor::from_vec(orig, &shape, &Device::Cpu).unwrap()).unwrap();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e} step {h:e}"));
        }
    }
    check(worst.0 < 1e-3, || format!("relative error {:.2e} at {}", worst.0, worst.1))?;
    Ok(format!("100 parameters, max relative error {:.2e}", worst.0))
}

// 6. Overfit sanity and surgery ordering ----------------------------------------------

fn steps_to(model: &mut SegModel, data: &[callosum::train::Sample], cfg: &TrainConfig, target: f64) -> Option<usize> {
    let st = train_loop(
        model,
        data,
        data,
        cfg,
        None,
        TrainOptions {
            target_miou: Some(target),
            ..Default::default()
        },
    )
    .unwrap();
    st.evaluations.iter().find(|e| e.1 >= target).map(|e| e.0)
}

fn criterion_6() -> Outcome {
    let cfg = tiny_config();
    let data = samples(64, 100..108);
    let recipe = |total| TrainConfig {
        total_steps: total,
        base_lr: 0.02,
        warmup_steps: Some(total / 100),
        checkpoint_every: 10,
        ..Default::default()
    };

    let mut scratch = SegModel::init_random(&cfg, 1).map_err(|e| e.to_string())?;
    let from_scratch = steps_to(&mut scratch, &data, &recipe(2000), 0.95);

    // Small pretrained encoder: the same architecture trained on other scenes,
    // exported with the groups a promptable-segmentation checkpoint carries.
    let pretrain_data = samples(64, 900..908);
    let mut pre = SegModel::init_random(&cfg, 77).map_err(|e| e.to_string())?;
    train_loop(&mut pre, &pretrain_data, &pretrain_data, &recipe(600), None, TrainOptions::default())
        .map_err(|e| e.to_string())?;
    let mut ckpt = pre.to_archive().map_err(|e| e.to_string())?;
    ckpt.tensors.retain(|k, _| k.starts_with(ENCODER_PREFIX));
    ckpt.metadata.clear();
    let z = |n: usize| Tensor::zeros(n, DType::F32, &Device::Cpu).unwrap();
    ckpt.tensors.insert("image_encoder.neck.0.weight".into(), z(16));
    ckpt.tensors.insert("prompt_encoder.no_mask_embed.weight".into(), z(16));
    ckpt.tensors.insert("mask_decoder.iou_token.weight".into(), z(16));
    let (mut imported, report) = surgery_import(&ckpt, &cfg, 1).map_err(|e| e.to_string())?;
    check(report.missing.is_empty(), || format!("import left {} encoder tensors missing", report.missing.len()))?;
    let from_surgery = steps_to(&mut imported, &data, &recipe(2000), 0.95);

    let fmt = |s: Option<usize>| s.map_or("never".to_string(), |s| s.to_string());
    let detail = format!(
        "mIoU 0.95 reached at step {} from scratch, {} after surgery import",
        fmt(from_scratch),
        fmt(from_surgery)
    );
    match (from_scratch, from_surgery) {
        (Some(a), Some(b)) if b < a => Ok(detail),
        (Some(_), Some(_)) => Err(format!("{detail}: surgery import not faster")),
        _ => Err(format!("{detail}: target not reached within 2000 steps")),
    }
}

// 7. Stitching -------------------------------------------------------------------------

const BLUR_RADIUS: i64 = 2;

/// 5×5 box mean with clamp-to-edge addressing, accumulated in a fixed order.
fn box_blur(data: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0f32; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut s = 0f64;
            for dy in -BLUR_RADIUS..=BLUR_RADIUS {
                for dx in -BLUR_RADIUS..=BLUR_RADIUS {
                    let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    s += data[yy * w + xx] as f64;
                }
            }
            out[y as usize * w + x as usize] = (s / 25.0) as f32;
        }
    }
    out
}

struct BlurOperator {
    tile: usize,
}

impl TilePredictor for BlurOperator {
    fn tile_px(&self) -> usize {
        self.tile
    }

    fn predict_tiles(&self, tiles: &[Vec<f32>]) -> callosum::Result<Vec<ProbabilityPair>> {
        tiles
            .iter()
            .map(|t| {
                let a = box_blur(t, self.tile, self.tile);
                let m = a.iter().map(|v| 1.0 - v).collect();
                ProbabilityPair::new(self.tile, self.tile, a, m)
            })
            .collect()
    }

    fn batch_size(&self) -> usize {
        3
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let op = BlurOperator { tile: 64 };
    let mut compared = 0;
    for &(w, h, stride) in &[(200usize, 150usize, 48usize), (301, 97, 32), (64, 64, 32), (130, 260, 40)] {
        let data: Vec<f32> = (0..w * h).map(|_| rng.random::<f32>()).collect();
        let img = FloatImage::new(w, h, data.clone()).unwrap();
        let plan = plan_tiles(w, h, 64, stride).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                let ws = plan.normalized_weights_at(x, y);
                let sum: f64 = ws.iter().map(|p| p.1).sum();
                check(!ws.is_empty() && (sum - 1.0).abs() <= 1e-6, || {
                    format!("{w}x{h} stride {stride}: weights at ({x}, {y}) sum to {sum}")
                })?;
            }
        }
        let stitched = predict_image(&op, &img, &plan).map_err(|e| e.to_string())?;
        let whole = box_blur(&data, w, h);
        let r = BLUR_RADIUS as usize;
        for y in r..h - r {
            for x in r..w - r {
                let i = y * w + x;
                check(stitched.axon[i].to_bits() == whole[i].to_bits(), || {
                    format!("{w}x{h} stride {stride}: ({x}, {y}) {} vs {}", stitched.axon[i], whole[i])
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} interior pixels bit-identical; weights sum to 1"))
}

// 8. Pipeline integration ----------------------------------------------------------------

fn copy_exports(band: &std::path::Path) -> usize {
    let mut n = 0;
    for e in std::fs::read_dir(band.join(PREDICTED_DIR)).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), band.join(CORRECTED_DIR).join(e.file_name())).unwrap();
        n += 1;
    }
    n
}

fn criterion_8() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("synth.toml");
    std::fs::write(&cfg_path, small_grid_toml(3, 6, 8)).unwrap();
    let mosaic = root.path().join("mosaic");
    let (code, _) = cli(&["synth", "--config", p(&cfg_path), "--out", p(&mosaic)]);
    check(code == 0, || format!("synth exited {code}"))?;

    // Only rows 0..2 count as annotated at the start.
    let manifest_path = mosaic.join("manifest.tsv");
    let mut m = MosaicManifest::load(&manifest_path).unwrap();
    for iy in 2..6 {
        for ix in 0..3 {
            let e = m.get_mut(ix, iy).unwrap();
            e.annotated = false;
            e.label_path = None;
        }
    }
    m.save(&manifest_path).unwrap();

    let job = root.path().join("job.toml");
    let model = tiny_config();
    std::fs::write(
        &job,
        format!(
            "[model]\ninput_px = {}\ndecoder_features = {}\n\n[train]\ntotal_steps = 200\nwarmup_steps = 2\nbase_lr = 0.02\ncheckpoint_every = 100\n\n[regions]\ntrain = [0, 1]\nval = [1, 2]\n",
            model.input_px, model.decoder_features
        ),
    )
    .unwrap();
    let run = root.path().join("run");
    let (code, _) = cli(&["train", "--manifest", p(&manifest_path), "--config", p(&job), "--out", p(&run), "--workers", "1"]);
    check(code == 0, || format!("train exited {code}"))?;
    let snapshot = run.join("best.safetensors");

    let bands = root.path().join("bands");
    let expand = |height: &str| {
        cli(&[
            "expand", "--manifest", p(&manifest_path), "--snapshot", p(&snapshot), "--band-height", height, "--out",
            p(&bands),
        ])
    };
    let (code, _) = expand("2");
    check(code == 0, || format!("expand exited {code}"))?;
    let band1 = bands.join("band-001");
    let copied = copy_exports(&band1);
    check(copied == 6, || format!("{copied} exports in band 1"))?;
    let before = BandState::from_manifest(&MosaicManifest::load(&manifest_path).unwrap()).unwrap();
    let (code, _) = cli(&["ingest", "--manifest", p(&manifest_path), "--corrected", p(&band1.join(CORRECTED_DIR))]);
    check(code == 0, || format!("ingest exited {code}"))?;
    let after_manifest = MosaicManifest::load(&manifest_path).map_err(|e| format!("manifest no longer loads: {e}"))?;
    let after = BandState::from_manifest(&after_manifest).unwrap();
    check(before.annotated == (0..2) && after.annotated == (0..4), || {
        format!("annotated rows {:?} -> {:?}", before.annotated, after.annotated)
    })?;
    for (&(ix, iy), e) in after_manifest.entries() {
        if e.annotated {
            let path = after_manifest.resolve(e.label_path.as_ref().ok_or("annotated entry without label")?);
            let mask = read_label_file(&path).map_err(|e| e.to_string())?;
            check(mask.width() == 64 && mask.height() == 64, || format!("label ({ix}, {iy}) has the wrong size"))?;
        }
    }

    // Second band: one corrupt correction makes ingest fail as a whole.
    let (code, _) = expand("2");
    check(code == 0, || format!("second expand exited {code}"))?;
    let band2 = bands.join("band-002");
    copy_exports(&band2);
    let bad = band2.join(CORRECTED_DIR).join("pred_1_5.png");
    let mut corrupt = read_label_file(&bad).unwrap().into_values();
    corrupt[100] = 7;
    image::GrayImage::from_raw(64, 64, corrupt).unwrap().save(&bad).unwrap();
    let snapshot_bytes = std::fs::read(&manifest_path).unwrap();
    let (code, _) = cli(&["ingest", "--manifest", p(&manifest_path), "--corrected", p(&band2.join(CORRECTED_DIR))]);
    check(code == 2, || format!("corrupt ingest exited {code}"))?;
    check(std::fs::read(&manifest_path).unwrap() == snapshot_bytes, || "manifest changed by a failed ingest".into())?;
    let stray: Vec<_> = std::fs::read_dir(&mosaic)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file() && e.file_name() != "manifest.tsv" && e.file_name() != "fibers.csv" && e.file_name() != "synth.toml")
        .collect();
    check(stray.is_empty(), || format!("stray files beside the manifest: {stray:?}"))?;
    Ok(format!("annotated rows 0..2 -> 0..4 after one band; failed ingest left the manifest byte-identical"))
}

// 9. Surgery report ----------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let cfg = EncoderConfig::toy();
    let donor = SegModel::init_random(&cfg, 9).map_err(|e| e.to_string())?;
    let mut ckpt = Archive {
        tensors: BTreeMap::new(),
        metadata: BTreeMap::new(),
    };
    let z = |shape: &[usize]| Tensor::zeros(shape, DType::F32, &Device::Cpu).unwrap();
    for (k, v) in donor.tensors().unwrap() {
        // Leave out the last block so some encoder tensors are missing.
        if k.starts_with(ENCODER_PREFIX) && !k.starts_with("image_encoder.blocks.3.") {
            ckpt.tensors.insert(k, v);
        }
    }
    for name in [
        "image_encoder.blocks.0.attn.rel_pos_h",
        "image_encoder.neck.0.weight",
        "image_encoder.neck.1.weight",
        "image_encoder.neck.1.bias",
        "image_encoder.neck.2.weight",
        "image_encoder.neck.3.weight",
        "image_encoder.neck.3.bias",
        "prompt_encoder.pe_layer.positional_encoding_gaussian_matrix",
        "prompt_encoder.point_embeddings.0.weight",
        "prompt_encoder.not_a_point_embed.weight",
        "prompt_encoder.mask_downscaling.0.weight",
        "prompt_encoder.no_mask_embed.weight",
        "mask_decoder.iou_token.weight",
        "mask_decoder.transformer.layers.0.self_attn.q_proj.weight",
    ] {
        ckpt.tensors.insert(name.into(), z(&[4, 4]));
    }
    let (model, report) = surgery_import(&ckpt, &cfg, 9).map_err(|e| e.to_string())?;

    let names: BTreeSet<&str> = ckpt.tensors.keys().map(String::as_str).collect();
    let loaded: BTreeSet<&str> = report.loaded.iter().map(String::as_str).collect();
    let discarded: BTreeSet<&str> = report.discarded_names().collect();
    let missing: BTreeSet<&str> = report.missing.iter().map(String::as_str).collect();
    check(loaded.len() == report.loaded.len() && discarded.len() == report.discarded.len(), || {
        "duplicate names in the report".into()
    })?;
    check(loaded.is_disjoint(&discarded), || "a name is both loaded and discarded".into())?;
    check(missing.is_disjoint(&names), || "a checkpoint name is reported missing".into())?;
    let covered: BTreeSet<&str> = loaded.union(&discarded).copied().collect();
    check(covered == names, || "loaded and discarded do not cover the checkpoint".into())?;
    let encoder: BTreeSet<&str> =
        model.vars().keys().map(String::as_str).filter(|k| k.starts_with(ENCODER_PREFIX)).collect();
    let expected_missing: BTreeSet<&str> = encoder.difference(&names).copied().collect();
    check(missing == expected_missing && !missing.is_empty(), || {
        format!("missing {} names, expected {}", missing.len(), expected_missing.len())
    })?;
    for (n, reason) in &report.discarded {
        let want = if n.starts_with("prompt_encoder.") {
            Some(DiscardReason::PromptEncoder)
        } else if n.starts_with("image_encoder.neck.") {
            Some(DiscardReason::Neck)
        } else {
            None
        };
        if let Some(w) = want {
            check(*reason == w, || format!("{n} discarded as {reason:?}"))?;
        }
    }
    let prompt_or_neck = names
        .iter()
        .filter(|n| n.starts_with("prompt_encoder.") || n.starts_with("image_encoder.neck."))
        .all(|n| discarded.contains(n));
    check(prompt_or_neck, || "a prompt-encoder or neck tensor was not discarded".into())?;
    Ok(format!(
        "{} names: {} loaded, {} discarded, {} encoder tensors missing",
        names.len(),
        loaded.len(),
        discarded.len(),
        missing.len()
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("formula oracles", Duration::from_secs(60), criterion_1),
        ("connected components", Duration::from_secs(60), criterion_2),
        ("generator round-trip", Duration::from_secs(120), criterion_3),
        ("schedule", Duration::from_secs(1), criterion_4),
        ("gradient check", Duration::from_secs(300), criterion_5),
        ("overfit sanity", Duration::from_secs(7200), criterion_6),
        ("stitching", Duration::from_secs(60), criterion_7),
        ("pipeline integration", Duration::from_secs(600), criterion_8),
        ("surgery report", Duration::from_secs(1), criterion_9),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = f();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            o => o,
        };
        let line = match &outcome {
            Ok(d) => format!("criterion {} ({name}): PASS [{took:.1?}] {d}", i + 1),
            Err(e) => {
                failed.push(i + 1);
                format!("criterion {} ({name}): FAIL [{took:.1?}] {e}", i + 1)
            }
        };
        let _ = writeln!(err, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

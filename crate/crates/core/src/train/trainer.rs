use std::io::Write;
use std::path::PathBuf;

use candle_core::{Device, Tensor};
use rand::Rng;

use super::augment::augment;
use super::config::{lr_at, TrainConfig};
use super::loss::bce_loss;
use super::optim::Sgd;
use super::state::{RngState, TrainState};
use crate::dataset::{read_label, read_patch, ClassMask, MosaicManifest, SplitTag};
use crate::error::{Error, Result};
use crate::evaluate::{IoUAccumulator, IoUReport};
use crate::infer::{plan_tiles, predict_image, reflect, FloatImage};
use crate::model::{targets_from_mask, SegModel};

pub const BEST_SNAPSHOT: &str = "best.safetensors";
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";

/// An annotated patch held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: FloatImage,
    pub mask: ClassMask,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: FloatImage, mask: ClassMask) -> Result<Self> {
        if image.width != mask.width() || image.height != mask.height() {
            return Err(Error::DimensionMismatch {
                context: "sample".into(),
                expected_w: image.width,
                expected_h: image.height,
                width: mask.width(),
                height: mask.height(),
            });
        }
        Ok(Self {
            id: id.into(),
            image,
            mask,
        })
    }
}

/// Annotated patches tagged with `split`, in grid order.
pub fn load_split(manifest: &MosaicManifest, split: SplitTag) -> Result<Vec<Sample>> {
    manifest
        .coords_in_split(split)
        .into_iter()
        .filter(|&(ix, iy)| manifest.get(ix, iy).is_some_and(|e| e.annotated))
        .map(|(ix, iy)| {
            let image = FloatImage::from_gray(&read_patch(manifest, ix, iy)?);
            Sample::new(format!("{ix}_{iy}"), image, read_label(manifest, ix, iy)?)
        })
        .collect()
}

/// Micro-averaged mIoU of the model's tiled predictions on `samples`.
pub fn evaluate_samples(model: &SegModel, samples: &[Sample], threshold: f64) -> Result<IoUReport> {
    let mut acc = IoUAccumulator::new("samples");
    let t = model.config().input_px;
    for s in samples {
        let plan = plan_tiles(s.image.width, s.image.height, t, (t / 2).max(1))?;
        let prob = predict_image(model, &s.image, &plan)?;
        acc.add(&prob.to_class_mask(threshold)?, &s.mask)?;
    }
    Ok(acc.report())
}

/// Hooks and limits for [`train_loop`].
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Receives `step\tlr\tloss\tval_miou_or_dash` after every step.
    pub log: Option<&'a mut dyn Write>,
    /// When set, `best.safetensors` and `checkpoint.safetensors` are written here.
    pub out_dir: Option<PathBuf>,
    /// Pause once this many steps are complete; the state can be resumed.
    pub stop_after: Option<usize>,
    /// Stop early at the first evaluation reaching this validation mIoU.
    pub target_miou: Option<f64>,
}

fn window<T: Copy>(data: &[T], w: usize, h: usize, x0: usize, y0: usize, size: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(size * size);
    for ty in 0..size {
        let y = reflect(y0 + ty, h);
        out.extend((0..size).map(|tx| data[y * w + reflect(x0 + tx, w)]));
    }
    out
}

/// A random `size`² crop (mirror-padded when the sample is smaller).
fn random_crop<R: Rng + ?Sized>(s: &Sample, size: usize, rng: &mut R) -> Result<(FloatImage, ClassMask)> {
    let (w, h) = (s.image.width, s.image.height);
    let x0 = if w > size { rng.random_range(0..=w - size) } else { 0 };
    let y0 = if h > size { rng.random_range(0..=h - size) } else { 0 };
    let img = window(&s.image.data, w, h, x0, y0, size);
    let lab = window(s.mask.values(), w, h, x0, y0, size);
    Ok((FloatImage::new(size, size, img)?, ClassMask::from_vec(size, size, lab)?))
}

/// Supervised fine-tuning with BCE, SGD and the warmup-cosine schedule.
/// Validation mIoU is computed every `checkpoint_every` steps and at the
/// final step; the best parameters are kept in the returned state. Starting
/// from `resume` continues a previous run exactly.
pub fn train_loop(
    model: &mut SegModel,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut opts: TrainOptions<'_>,
) -> Result<TrainState> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if val.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let mut state = resume.unwrap_or_else(|| TrainState::new(cfg.seed));
    if state.step > cfg.total_steps {
        return Err(Error::invalid(format!(
            "resume step {} beyond total_steps {}",
            state.step, cfg.total_steps
        )));
    }
    let mut rng = state.rng.restore()?;
    let mut opt = Sgd::with_buffers(cfg.momentum, cfg.weight_decay, std::mem::take(&mut state.momentum));
    let s = model.config().input_px;
    let end = opts.stop_after.map_or(cfg.total_steps, |n| n.min(cfg.total_steps));

    while state.step < end {
        let step = state.step;
        let lr = lr_at(cfg, step)?;
        let mut images = Vec::with_capacity(cfg.batch_size * s * s);
        let mut targets = Vec::with_capacity(cfg.batch_size * 2 * s * s);
        let mut ids = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let sample = &train[rng.random_range(0..train.len())];
            let (img, mask) = random_crop(sample, s, &mut rng)?;
            let (img, mask) = augment(&img, &mask, &cfg.augment, &mut rng)?;
            let (ta, tm) = targets_from_mask(&mask);
            images.extend_from_slice(&img.data);
            targets.extend(ta);
            targets.extend(tm);
            ids.push(sample.id.clone());
        }
        let b = cfg.batch_size;
        let x = Tensor::from_vec(images, (b, 1, s, s), &Device::Cpu)?;
        let t = Tensor::from_vec(targets, (b, 2, s, s), &Device::Cpu)?;
        let pred = model.forward(&x)?;
        let loss = bce_loss(&pred, &t)?;
        let loss_v = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        if !loss_v.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                lr,
                loss: loss_v,
                batch: ids,
            });
        }
        let grads = loss.backward()?;
        opt.step(model.vars(), &grads, lr)?;
        state.step += 1;
        state.last_loss = Some(loss_v);

        let evaluate = state.step % cfg.checkpoint_every == 0 || state.step == cfg.total_steps;
        let mut val_field = "-".to_string();
        let mut reached = false;
        if evaluate {
            let miou = evaluate_samples(model, val, cfg.threshold)?.miou();
            val_field = format!("{miou:.6}");
            state.evaluations.push((state.step, miou));
            if state.best_val_miou.is_none_or(|b| miou > b) {
                state.best_val_miou = Some(miou);
                state.best_step = Some(state.step);
                state.best_params = Some(model.tensors()?);
                if let Some(dir) = &opts.out_dir {
                    let p = dir.join(BEST_SNAPSHOT);
                    model.save_snapshot(&p)?;
                    state.snapshot = Some(p);
                }
            }
            reached = opts.target_miou.is_some_and(|t| miou >= t);
        }
        if let Some(log) = opts.log.as_mut() {
            writeln!(log, "{}\t{lr:.9}\t{loss_v:.9}\t{val_field}", state.step)
                .map_err(|e| Error::io("training log", e))?;
        }
        if evaluate {
            if let Some(dir) = &opts.out_dir {
                state.rng = RngState::capture(&rng);
                state.momentum = opt.buffers().clone();
                state.save(model, &dir.join(CHECKPOINT_FILE))?;
            }
        }
        if reached {
            break;
        }
    }
    state.rng = RngState::capture(&rng);
    state.momentum = opt.buffers().clone();
    Ok(state)
}

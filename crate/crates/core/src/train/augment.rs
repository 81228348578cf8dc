use rand::Rng;

use super::config::AugmentFlags;
use crate::dataset::ClassMask;
use crate::error::{Error, Result};
use crate::infer::FloatImage;

/// Mirrors each row.
pub fn flip_h<T: Copy>(w: usize, data: &[T]) -> Vec<T> {
    data.chunks(w).flat_map(|r| r.iter().rev().copied()).collect()
}

/// Reverses the row order.
pub fn flip_v<T: Copy>(w: usize, data: &[T]) -> Vec<T> {
    data.chunks(w).rev().flatten().copied().collect()
}

/// Rotates by `k` quarter turns counter-clockwise; returns the new width and height.
pub fn rot90<T: Copy>(w: usize, h: usize, data: &[T], k: u8) -> (usize, usize, Vec<T>) {
    match k % 4 {
        0 => (w, h, data.to_vec()),
        1 => {
            // out(x', y') = in(w - 1 - y', x'), out is h wide and w tall.
            let mut out = Vec::with_capacity(w * h);
            for y in 0..w {
                for x in 0..h {
                    out.push(data[x * w + (w - 1 - y)]);
                }
            }
            (h, w, out)
        }
        2 => (w, h, data.iter().rev().copied().collect()),
        _ => {
            let (w1, h1, once) = rot90(w, h, data, 1);
            let (w2, h2, twice) = rot90(w1, h1, &once, 2);
            debug_assert_eq!((w2, h2), (h, w));
            (w2, h2, twice)
        }
    }
}

/// Random flips and quarter turns applied identically to image and mask,
/// then brightness/contrast jitter on the image only. Disabled flags draw no
/// random numbers.
pub fn augment<R: Rng + ?Sized>(
    image: &FloatImage,
    mask: &ClassMask,
    flags: &AugmentFlags,
    rng: &mut R,
) -> Result<(FloatImage, ClassMask)> {
    if image.width != mask.width() || image.height != mask.height() {
        return Err(Error::DimensionMismatch {
            context: "augment".into(),
            expected_w: image.width,
            expected_h: image.height,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let (mut w, mut h) = (image.width, image.height);
    let mut img = image.data.clone();
    let mut lab = mask.values().to_vec();
    if flags.hflip && rng.random_bool(0.5) {
        img = flip_h(w, &img);
        lab = flip_h(w, &lab);
    }
    if flags.vflip && rng.random_bool(0.5) {
        img = flip_v(w, &img);
        lab = flip_v(w, &lab);
    }
    if flags.rot90 {
        let k = rng.random_range(0..4u8);
        let (nw, nh, i2) = rot90(w, h, &img, k);
        let (_, _, l2) = rot90(w, h, &lab, k);
        (w, h, img, lab) = (nw, nh, i2, l2);
    }
    let j = flags.intensity_jitter;
    if j > 0.0 {
        let b = rng.random_range(-j..=j) as f32;
        let c = rng.random_range(1.0 - j..=1.0 + j) as f32;
        for v in &mut img {
            *v = ((*v - 0.5) * c + 0.5 + b).clamp(0.0, 1.0);
        }
    }
    Ok((FloatImage::new(w, h, img)?, ClassMask::from_vec(w, h, lab)?))
}

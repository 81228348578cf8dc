use std::f64::consts::FRAC_PI_2;
use std::ops::Range;

use crate::dataset::{read_patch, MosaicManifest};
use crate::error::{Error, Result};
use crate::model::ProbabilityPair;

/// A grayscale raster with values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffer holds {} values, expected {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_gray(img: &image::GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Extracts the `size`×`size` window at `(x0, y0)`, mirroring indices that
    /// fall outside the image.
    pub fn window_reflect(&self, x0: usize, y0: usize, size: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(size * size);
        for ty in 0..size {
            let y = reflect(y0 + ty, self.height);
            let row = &self.data[y * self.width..(y + 1) * self.width];
            if x0 + size <= self.width {
                out.extend_from_slice(&row[x0..x0 + size]);
            } else {
                out.extend((0..size).map(|tx| row[reflect(x0 + tx, self.width)]));
            }
        }
        out
    }
}

/// Mirror index into `[0, len)` without repeating the edge sample.
pub(crate) fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let j = i % period;
    if j < len {
        j
    } else {
        period - j
    }
}

/// Tile origins along one axis: stride steps with the last tile clamped to the
/// extent, or a single tile when the extent is not larger than a tile.
fn axis_origins(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let mut v = vec![0];
    let mut o = 0;
    while o + tile < len {
        o = (o + stride).min(len - tile);
        v.push(o);
    }
    v
}

/// Raised-cosine weights for one tile along one axis. Sides facing another
/// tile fade from zero (inside a dead margin of a quarter of the overlap) to
/// one; sides on the extent border keep full weight.
fn axis_profile(origin: usize, len: usize, tile: usize, stride: usize) -> Vec<f64> {
    let overlap = (tile - stride) as f64;
    let margin = overlap / 4.0;
    let ramp = overlap - 2.0 * margin;
    let left_interior = origin > 0;
    let right_interior = origin + tile < len;
    let fade = |d: f64| -> f64 {
        if d <= margin {
            0.0
        } else if ramp <= 0.0 || d >= margin + ramp {
            1.0
        } else {
            (FRAC_PI_2 * (d - margin) / ramp).sin().powi(2)
        }
    };
    (0..tile)
        .map(|i| {
            let mut w = 1.0;
            if left_interior {
                w *= fade(i as f64 + 0.5);
            }
            if right_interior {
                w *= fade((tile - i) as f64 - 0.5);
            }
            w
        })
        .collect()
}

/// Tile layout and blend weights for applying a fixed-size model to a larger extent.
#[derive(Debug, Clone, PartialEq)]
pub struct TilingPlan {
    pub extent_w: usize,
    pub extent_h: usize,
    pub tile_px: usize,
    pub stride_px: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
    profile_x: Vec<Vec<f64>>,
    profile_y: Vec<Vec<f64>>,
}

impl TilingPlan {
    /// Tile origins in row-major order.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        self.ys
            .iter()
            .flat_map(|&y| self.xs.iter().map(move |&x| (x, y)))
            .collect()
    }

    pub fn tile_count(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn x_origins(&self) -> &[usize] {
        &self.xs
    }

    pub fn y_origins(&self) -> &[usize] {
        &self.ys
    }

    /// True when the extent is smaller than a tile and tiles are padded.
    pub fn is_padded(&self) -> bool {
        self.extent_w < self.tile_px || self.extent_h < self.tile_px
    }

    /// Unnormalized blend weight of tile `k` (row-major) at local position `(tx, ty)`.
    pub fn tile_weight(&self, k: usize, tx: usize, ty: usize) -> f64 {
        let (col, row) = (k % self.xs.len(), k / self.xs.len());
        self.profile_x[col][tx] * self.profile_y[row][ty]
    }

    /// Normalized weights of every tile covering extent pixel `(x, y)`; they sum to one.
    pub fn normalized_weights_at(&self, x: usize, y: usize) -> Vec<(usize, f64)> {
        let mut ws = Vec::new();
        for (k, (ox, oy)) in self.origins().into_iter().enumerate() {
            if x >= ox && x < ox + self.tile_px && y >= oy && y < oy + self.tile_px {
                let w = self.tile_weight(k, x - ox, y - oy);
                if w > 0.0 {
                    ws.push((k, w));
                }
            }
        }
        let total: f64 = ws.iter().map(|p| p.1).sum();
        ws.iter_mut().for_each(|p| p.1 /= total);
        ws
    }
}

pub fn plan_tiles(extent_w: usize, extent_h: usize, tile_px: usize, stride_px: usize) -> Result<TilingPlan> {
    if stride_px == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if tile_px == 0 || extent_w == 0 || extent_h == 0 {
        return Err(Error::invalid("tile and extent must be non-empty"));
    }
    if stride_px > tile_px {
        return Err(Error::invalid(format!("stride {stride_px} exceeds tile {tile_px}")));
    }
    let xs = axis_origins(extent_w, tile_px, stride_px);
    let ys = axis_origins(extent_h, tile_px, stride_px);
    let profile_x = xs.iter().map(|&o| axis_profile(o, extent_w, tile_px, stride_px)).collect();
    let profile_y = ys.iter().map(|&o| axis_profile(o, extent_h, tile_px, stride_px)).collect();
    Ok(TilingPlan {
        extent_w,
        extent_h,
        tile_px,
        stride_px,
        xs,
        ys,
        profile_x,
        profile_y,
    })
}

/// Anything that maps square grayscale tiles to two-channel probabilities.
pub trait TilePredictor {
    fn tile_px(&self) -> usize;

    /// Predicts a batch of `tile_px`² tiles (values in [0, 1]).
    fn predict_tiles(&self, tiles: &[Vec<f32>]) -> Result<Vec<ProbabilityPair>>;

    /// Tiles per forward call.
    fn batch_size(&self) -> usize {
        1
    }
}

/// Runs `predictor` over every tile of `plan` and blends the results. Tile
/// outputs are accumulated in plan order in f64, so results are bit-reproducible.
pub fn predict_image<P: TilePredictor + ?Sized>(
    predictor: &P,
    image: &FloatImage,
    plan: &TilingPlan,
) -> Result<ProbabilityPair> {
    if plan.extent_w != image.width || plan.extent_h != image.height {
        return Err(Error::invalid(format!(
            "plan extent {}x{} does not match image {}x{}",
            plan.extent_w, plan.extent_h, image.width, image.height
        )));
    }
    if plan.tile_px != predictor.tile_px() {
        return Err(Error::invalid(format!(
            "plan tile {} does not match model input {}",
            plan.tile_px,
            predictor.tile_px()
        )));
    }
    let (w, h, t) = (image.width, image.height, plan.tile_px);
    let mut acc_axon = vec![0f64; w * h];
    let mut acc_myelin = vec![0f64; w * h];
    let mut acc_w = vec![0f64; w * h];
    let origins = plan.origins();
    let batch = predictor.batch_size().max(1);
    for (chunk_idx, chunk) in origins.chunks(batch).enumerate() {
        let tiles: Vec<Vec<f32>> = chunk
            .iter()
            .map(|&(ox, oy)| image.window_reflect(ox, oy, t))
            .collect();
        let preds = predictor.predict_tiles(&tiles)?;
        if preds.len() != tiles.len() {
            return Err(Error::invalid("predictor returned the wrong number of tiles"));
        }
        for (j, (&(ox, oy), p)) in chunk.iter().zip(&preds).enumerate() {
            if p.width != t || p.height != t {
                return Err(Error::invalid("predictor returned a tile of the wrong size"));
            }
            let k = chunk_idx * batch + j;
            for ty in 0..t.min(h - oy) {
                for tx in 0..t.min(w - ox) {
                    let wgt = plan.tile_weight(k, tx, ty);
                    if wgt == 0.0 {
                        continue;
                    }
                    let (i, ti) = ((oy + ty) * w + ox + tx, ty * t + tx);
                    acc_axon[i] += wgt * p.axon[ti] as f64;
                    acc_myelin[i] += wgt * p.myelin[ti] as f64;
                    acc_w[i] += wgt;
                }
            }
        }
    }
    let mut out = ProbabilityPair::zeros(w, h);
    for i in 0..w * h {
        debug_assert!(acc_w[i] > 0.0, "pixel {i} not covered");
        out.axon[i] = (acc_axon[i] / acc_w[i]) as f32;
        out.myelin[i] = (acc_myelin[i] / acc_w[i]) as f32;
    }
    Ok(out)
}

/// Reads the patches in `x_range` × `y_range` into one float image.
pub fn read_region(manifest: &MosaicManifest, x_range: Range<u32>, y_range: Range<u32>) -> Result<FloatImage> {
    if x_range.is_empty() || y_range.is_empty() || x_range.end > manifest.grid_nx || y_range.end > manifest.grid_ny {
        return Err(Error::invalid(format!(
            "region {x_range:?} x {y_range:?} is empty or outside grid {}x{}",
            manifest.grid_nx, manifest.grid_ny
        )));
    }
    let p = manifest.patch_px as usize;
    let (w, h) = (x_range.len() * p, y_range.len() * p);
    let mut data = vec![0f32; w * h];
    for (ry, iy) in y_range.clone().enumerate() {
        for (rx, ix) in x_range.clone().enumerate() {
            let patch = read_patch(manifest, ix, iy)?;
            for (py, row) in patch.as_raw().chunks_exact(p).enumerate() {
                let dst = (ry * p + py) * w + rx * p;
                for (d, &v) in data[dst..dst + p].iter_mut().zip(row) {
                    *d = v as f32 / 255.0;
                }
            }
        }
    }
    FloatImage::new(w, h, data)
}

/// Predicts a patch-aligned region of the mosaic with tiled, blended inference.
/// `plan` must have been made for the region's pixel extent.
pub fn predict_region<P: TilePredictor + ?Sized>(
    predictor: &P,
    manifest: &MosaicManifest,
    x_range: Range<u32>,
    y_range: Range<u32>,
    plan: &TilingPlan,
) -> Result<ProbabilityPair> {
    let image = read_region(manifest, x_range, y_range)?;
    predict_image(predictor, &image, plan)
}

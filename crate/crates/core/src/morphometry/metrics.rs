use std::collections::BTreeSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::label_components;
use crate::dataset::{
    downsample_labels, read_label, ClassMask, MosaicManifest, RoiMask, AXON, MYELIN,
};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_COMPONENT_AREA: u64 = 4;

/// √(4·area/π): the diameter of the circle with the same area.
pub fn equivalent_diameter(area: u64) -> Result<f64> {
    if area == 0 {
        return Err(Error::invalid("equivalent diameter needs a positive area"));
    }
    Ok((4.0 * area as f64 / PI).sqrt())
}

/// Aggregate g-ratio estimate 1/√(1 + MVF/AVF); undefined when AVF is zero.
pub fn g_ratio(avf: f64, mvf: f64) -> Option<f64> {
    (avf > 0.0).then(|| 1.0 / (1.0 + mvf / avf).sqrt())
}

/// Aggregate measurements for one metric patch. Diameters are in pixels at
/// the metric pitch; see [`MorphometryRecord::diam_mean_nm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryRecord {
    pub roi: bool,
    pub density: u32,
    pub diam_mean: Option<f64>,
    pub diam_std: Option<f64>,
    pub avf: f64,
    pub mvf: f64,
    pub g_ratio: Option<f64>,
    /// Pixels in the (possibly clipped) metric patch.
    pub area_px: u64,
}

impl MorphometryRecord {
    pub fn outside_roi(area_px: u64) -> Self {
        Self {
            roi: false,
            density: 0,
            diam_mean: None,
            diam_std: None,
            avf: 0.0,
            mvf: 0.0,
            g_ratio: None,
            area_px,
        }
    }

    pub fn diam_mean_nm(&self, metric_pixel_nm: f64) -> Option<f64> {
        self.diam_mean.map(|d| d * metric_pixel_nm)
    }

    pub fn diam_std_nm(&self, metric_pixel_nm: f64) -> Option<f64> {
        self.diam_std.map(|d| d * metric_pixel_nm)
    }
}

/// Metrics of one metric patch with the default speckle filter.
pub fn patch_metrics(mask: &ClassMask, roi: bool) -> MorphometryRecord {
    patch_metrics_with(mask, roi, DEFAULT_MIN_COMPONENT_AREA)
}

/// Metrics of one metric patch. Axon objects are 8-connected class-1
/// components of at least `min_area` pixels; the volume fractions count every
/// pixel regardless of the filter.
pub fn patch_metrics_with(mask: &ClassMask, roi: bool, min_area: u64) -> MorphometryRecord {
    let area_px = (mask.width() * mask.height()) as u64;
    if !roi {
        return MorphometryRecord::outside_roi(area_px);
    }
    let hist = mask.histogram();
    let total = area_px.max(1) as f64;
    let avf = hist[AXON as usize] as f64 / total;
    let mvf = hist[MYELIN as usize] as f64 / total;

    let comps = label_components(mask, AXON);
    let diams: Vec<f64> = comps
        .areas
        .iter()
        .filter(|&&a| a >= min_area.max(1))
        .map(|&a| equivalent_diameter(a).expect("positive area"))
        .collect();
    let (diam_mean, diam_std) = if diams.is_empty() {
        (None, None)
    } else {
        let n = diams.len() as f64;
        let mean = diams.iter().sum::<f64>() / n;
        let var = diams.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    MorphometryRecord {
        roi: true,
        density: diams.len() as u32,
        diam_mean,
        diam_std,
        avf,
        mvf,
        g_ratio: g_ratio(avf, mvf),
        area_px,
    }
}

/// How native labels are re-gridded for aggregate metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricGridSpec {
    /// Side of a metric patch in downsampled pixels.
    pub metric_patch_px: u32,
    /// Native-to-metric pitch ratio (4 nm → 16 nm is 4).
    pub downsample_factor: u32,
    pub min_component_area: u64,
}

impl Default for MetricGridSpec {
    fn default() -> Self {
        Self {
            metric_patch_px: 1024,
            downsample_factor: 4,
            min_component_area: DEFAULT_MIN_COMPONENT_AREA,
        }
    }
}

impl MetricGridSpec {
    pub fn validate(&self, manifest: &MosaicManifest) -> Result<()> {
        if self.metric_patch_px == 0 || self.downsample_factor == 0 {
            return Err(Error::invalid("metric_patch_px and downsample_factor must be positive"));
        }
        if manifest.patch_px % self.downsample_factor != 0 {
            return Err(Error::invalid(format!(
                "patch_px {} is not divisible by downsample factor {}",
                manifest.patch_px, self.downsample_factor
            )));
        }
        Ok(())
    }

    /// Side of one native patch after downsampling.
    pub fn downsampled_patch_px(&self, manifest: &MosaicManifest) -> u64 {
        (manifest.patch_px / self.downsample_factor) as u64
    }

    /// Metric grid dimensions: ceil(downsampled extent / metric patch).
    pub fn grid_dims(&self, manifest: &MosaicManifest) -> (usize, usize) {
        let ds = self.downsampled_patch_px(manifest);
        let m = self.metric_patch_px as u64;
        (
            (manifest.grid_nx as u64 * ds).div_ceil(m) as usize,
            (manifest.grid_ny as u64 * ds).div_ceil(m) as usize,
        )
    }

    pub fn metric_pixel_nm(&self, manifest: &MosaicManifest) -> f64 {
        manifest.pixel_nm * self.downsample_factor as f64
    }

    /// Downsampled pixel window `(x0, y0, w, h)` of metric cell `(gx, gy)`, clipped to the slide.
    fn cell_window(&self, manifest: &MosaicManifest, gx: usize, gy: usize) -> (u64, u64, u64, u64) {
        let ds = self.downsampled_patch_px(manifest);
        let (ext_w, ext_h) = (manifest.grid_nx as u64 * ds, manifest.grid_ny as u64 * ds);
        let m = self.metric_patch_px as u64;
        let (x0, y0) = (gx as u64 * m, gy as u64 * m);
        (x0, y0, m.min(ext_w - x0), m.min(ext_h - y0))
    }

    /// Native patches overlapping metric cell `(gx, gy)`.
    fn cell_patches(&self, manifest: &MosaicManifest, gx: usize, gy: usize) -> Vec<(u32, u32)> {
        let ds = self.downsampled_patch_px(manifest);
        let (x0, y0, w, h) = self.cell_window(manifest, gx, gy);
        let mut out = Vec::new();
        for iy in y0 / ds..(y0 + h).div_ceil(ds) {
            for ix in x0 / ds..(x0 + w).div_ceil(ds) {
                out.push((ix as u32, iy as u32));
            }
        }
        out
    }
}

/// Per-cell records over a whole slide, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideMorphometry {
    pub gx: usize,
    pub gy: usize,
    /// Nanometers per pixel at the metric pitch.
    pub metric_pixel_nm: f64,
    pub records: Vec<MorphometryRecord>,
}

impl SlideMorphometry {
    pub fn record(&self, gx: usize, gy: usize) -> &MorphometryRecord {
        &self.records[gy * self.gx + gx]
    }

    pub fn roi_cells(&self) -> usize {
        self.records.iter().filter(|r| r.roi).count()
    }

    /// Mean of the defined per-cell g-ratios inside the ROI.
    pub fn mean_g_ratio(&self) -> Option<f64> {
        let gs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.roi)
            .filter_map(|r| r.g_ratio)
            .collect();
        (!gs.is_empty()).then(|| gs.iter().sum::<f64>() / gs.len() as f64)
    }

    pub fn summary_line(&self) -> String {
        let g = self
            .mean_g_ratio()
            .map(|g| format!("{g:.6}"))
            .unwrap_or_else(|| "-".into());
        format!("SLIDE-SUMMARY v1 mean_g_ratio={g} roi_cells={}", self.roi_cells())
    }
}

/// Computes the record of a single metric cell. Exposed so interrupted runs can
/// be resumed cell by cell.
pub fn cell_metrics(
    manifest: &MosaicManifest,
    spec: &MetricGridSpec,
    gx: usize,
    gy: usize,
    roi: bool,
) -> Result<MorphometryRecord> {
    let (x0, y0, w, h) = spec.cell_window(manifest, gx, gy);
    if !roi {
        return Ok(MorphometryRecord::outside_roi(w * h));
    }
    let ds = spec.downsampled_patch_px(manifest);
    let mut cell = ClassMask::zeros(w as usize, h as usize);
    for (ix, iy) in spec.cell_patches(manifest, gx, gy) {
        let label = read_label(manifest, ix, iy)?;
        let small = downsample_labels(&label, spec.downsample_factor as usize)?;
        // Overlap of this patch with the cell, in downsampled slide coordinates.
        let (px0, py0) = (ix as u64 * ds, iy as u64 * ds);
        let ox0 = px0.max(x0);
        let oy0 = py0.max(y0);
        let ox1 = (px0 + ds).min(x0 + w);
        let oy1 = (py0 + ds).min(y0 + h);
        let part = small.crop(
            (ox0 - px0) as usize,
            (oy0 - py0) as usize,
            (ox1 - ox0) as usize,
            (oy1 - oy0) as usize,
        );
        cell.paste(&part, (ox0 - x0) as usize, (oy0 - y0) as usize);
    }
    Ok(patch_metrics_with(&cell, true, spec.min_component_area))
}

/// Downsamples the slide's labels, re-tiles them into metric patches and
/// computes [`patch_metrics`] for each ROI cell. Every ROI cell must be fully
/// covered by annotated patches; all missing patches are reported at once.
pub fn slide_morphometry(
    manifest: &MosaicManifest,
    spec: &MetricGridSpec,
    roi: &RoiMask,
) -> Result<SlideMorphometry> {
    spec.validate(manifest)?;
    let (gx, gy) = spec.grid_dims(manifest);
    if roi.dims() != (gx, gy) {
        return Err(Error::invalid(format!(
            "ROI is {}x{} but the metric grid is {gx}x{gy}",
            roi.dims().0,
            roi.dims().1
        )));
    }
    let mut missing = BTreeSet::new();
    for cy in 0..gy {
        for cx in 0..gx {
            if !roi.inside(cx, cy) {
                continue;
            }
            for (ix, iy) in spec.cell_patches(manifest, cx, cy) {
                let labelled = manifest
                    .get(ix, iy)
                    .is_some_and(|e| e.annotated && e.label_path.is_some());
                if !labelled {
                    missing.insert((iy, ix));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingLabels(missing.into_iter().map(|(y, x)| (x, y)).collect()));
    }
    let records = (0..gx * gy)
        .into_par_iter()
        .map(|i| cell_metrics(manifest, spec, i % gx, i / gx, roi.inside(i % gx, i / gx)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SlideMorphometry {
        gx,
        gy,
        metric_pixel_nm: spec.metric_pixel_nm(manifest),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameters() {
        assert!((equivalent_diameter(100).unwrap() - 11.283_791_670_955_125).abs() < 1e-12);
        assert!((equivalent_diameter(1).unwrap() - 1.128_379_167_095_512_6).abs() < 1e-12);
        assert!(equivalent_diameter(0).is_err());
    }

    #[test]
    fn g_ratio_limits() {
        assert!((g_ratio(0.2, 0.2).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(g_ratio(0.3, 0.0), Some(1.0));
        assert_eq!(g_ratio(0.0, 0.4), None);
    }

    #[test]
    fn speckle_filter_and_population_std() {
        // One 3x3 axon (area 9) and one single-pixel speck.
        let mut m = ClassMask::zeros(8, 8);
        for y in 1..4 {
            for x in 1..4 {
                m.set(x, y, AXON);
            }
        }
        m.set(6, 6, AXON);
        let r = patch_metrics(&m, true);
        assert_eq!(r.density, 1);
        assert_eq!(r.diam_std, Some(0.0));
        assert!((r.avf - 10.0 / 64.0).abs() < 1e-15);
        let r0 = patch_metrics_with(&m, true, 1);
        assert_eq!(r0.density, 2);
    }

    #[test]
    fn outside_roi_carries_nothing() {
        let m = ClassMask::from_vec(2, 1, vec![1, 2]).unwrap();
        let r = patch_metrics(&m, false);
        assert!(!r.roi && r.density == 0 && r.g_ratio.is_none() && r.diam_mean.is_none());
    }

    #[test]
    fn full_slide_grid_dims() {
        let m = MosaicManifest::new(448, 1408, 1024, 4.0).unwrap();
        let spec = MetricGridSpec::default();
        assert_eq!(spec.grid_dims(&m), (112, 352));
        assert_eq!(spec.metric_pixel_nm(&m), 16.0);
    }

    #[test]
    fn cell_patch_cover() {
        let m = MosaicManifest::new(5, 3, 64, 4.0).unwrap();
        let spec = MetricGridSpec {
            metric_patch_px: 32,
            downsample_factor: 4,
            min_component_area: 4,
        };
        // Downsampled patches are 16 px; a 32 px cell spans 2x2 patches, the last column is clipped.
        assert_eq!(spec.grid_dims(&m), (3, 2));
        assert_eq!(spec.cell_patches(&m, 0, 0), vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(spec.cell_patches(&m, 2, 1), vec![(4, 2)]);
        assert_eq!(spec.cell_window(&m, 2, 1), (64, 32, 16, 16));
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::GrayImage;

use super::metrics::{MorphometryRecord, SlideMorphometry};
use crate::dataset::write_gray_png;
use crate::error::{Error, Result};
use crate::fsutil;

pub const RAW_HEADER: &str = "gx,gy,diam_mean,diam_std,density,avf,mvf,g_ratio,roi";
pub const RAW_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMetric {
    DiamMean,
    DiamStd,
    Density,
    Avf,
    Mvf,
    GRatio,
}

impl MapMetric {
    pub const ALL: [MapMetric; 6] = [
        MapMetric::DiamMean,
        MapMetric::DiamStd,
        MapMetric::Density,
        MapMetric::Avf,
        MapMetric::Mvf,
        MapMetric::GRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapMetric::DiamMean => "diam_mean",
            MapMetric::DiamStd => "diam_std",
            MapMetric::Density => "density",
            MapMetric::Avf => "avf",
            MapMetric::Mvf => "mvf",
            MapMetric::GRatio => "g_ratio",
        }
    }

    /// The metric's value, or `None` outside the ROI or where undefined.
    pub fn value(self, r: &MorphometryRecord) -> Option<f64> {
        if !r.roi {
            return None;
        }
        match self {
            MapMetric::DiamMean => r.diam_mean,
            MapMetric::DiamStd => r.diam_std,
            MapMetric::Density => Some(r.density as f64),
            MapMetric::Avf => Some(r.avf),
            MapMetric::Mvf => Some(r.mvf),
            MapMetric::GRatio => r.g_ratio,
        }
    }
}

/// Raw and max-min normalized values of one metric over the metric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMap {
    pub metric: String,
    pub gx: usize,
    pub gy: usize,
    pub raw: Vec<Option<f64>>,
    pub normalized: Vec<Option<f64>>,
}

impl DistributionMap {
    /// 8-bit encoding: `round(255 · normalized)`, absent cells 0.
    pub fn to_image(&self) -> GrayImage {
        let px = self
            .normalized
            .iter()
            .map(|v| v.map_or(0, |v| (255.0 * v).round() as u8))
            .collect();
        GrayImage::from_raw(self.gx as u32, self.gy as u32, px).expect("map dims")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("gx,gy,raw,normalized\n");
        for (i, (r, n)) in self.raw.iter().zip(&self.normalized).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", i % self.gx, i / self.gx, fmt_opt(*r), fmt_opt(*n));
        }
        s
    }
}

/// Max-min normalization over the defined cells: `(v − min)/(max − min)`.
/// A constant map normalizes to all zeros. Fails when no cell has a value.
pub fn normalize_map(metric: &str, gx: usize, gy: usize, values: Vec<Option<f64>>) -> Result<DistributionMap> {
    if values.len() != gx * gy {
        return Err(Error::invalid(format!("{} values for a {gx}x{gy} map", values.len())));
    }
    let defined = values.iter().flatten();
    let (min, max) = defined.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min > max {
        return Err(Error::invalid(format!("{metric}: no ROI cell carries a value")));
    }
    let span = max - min;
    let normalized = values
        .iter()
        .map(|v| v.map(|v| if span > 0.0 { (v - min) / span } else { 0.0 }))
        .collect();
    Ok(DistributionMap {
        metric: metric.to_string(),
        gx,
        gy,
        raw: values,
        normalized,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}

/// CSV of all records with header [`RAW_HEADER`]; non-ROI cells carry dashes.
pub fn raw_csv(slide: &SlideMorphometry) -> String {
    let mut s = format!("{RAW_HEADER}\n");
    for (i, r) in slide.records.iter().enumerate() {
        let (x, y) = (i % slide.gx, i / slide.gx);
        if r.roi {
            let _ = writeln!(
                s,
                "{x},{y},{},{},{},{:.6},{:.6},{},1",
                fmt_opt(r.diam_mean),
                fmt_opt(r.diam_std),
                r.density,
                r.avf,
                r.mvf,
                fmt_opt(r.g_ratio)
            );
        } else {
            let _ = writeln!(s, "{x},{y},-,-,-,-,-,-,0");
        }
    }
    s
}

/// Parses [`raw_csv`] output back into records (cell areas are not stored and read as 0).
pub fn parse_raw_csv(text: &str, metric_pixel_nm: f64) -> Result<SlideMorphometry> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RAW_HEADER => {}
        _ => return Err(Error::Config(format!("expected header `{RAW_HEADER}`"))),
    }
    let mut cells = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::Config(format!("metrics line {}: {m}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(err("expected 9 fields"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err("bad number"))
            }
        };
        let x: usize = f[0].parse().map_err(|_| err("bad gx"))?;
        let y: usize = f[1].parse().map_err(|_| err("bad gy"))?;
        let roi = f[8] == "1";
        let rec = if roi {
            MorphometryRecord {
                roi,
                density: num(f[4])?.unwrap_or(0.0) as u32,
                diam_mean: num(f[2])?,
                diam_std: num(f[3])?,
                avf: num(f[5])?.unwrap_or(0.0),
                mvf: num(f[6])?.unwrap_or(0.0),
                g_ratio: num(f[7])?,
                area_px: 0,
            }
        } else {
            MorphometryRecord::outside_roi(0)
        };
        cells.push((x, y, rec));
    }
    let gx = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let gy = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if cells.len() != gx * gy {
        return Err(Error::Config(format!("metrics file covers {} of {gx}x{gy} cells", cells.len())));
    }
    let mut records = vec![MorphometryRecord::outside_roi(0); gx * gy];
    for (x, y, r) in cells {
        records[y * gx + x] = r;
    }
    Ok(SlideMorphometry {
        gx,
        gy,
        metric_pixel_nm,
        records,
    })
}

pub fn distribution_map(slide: &SlideMorphometry, metric: MapMetric) -> Result<DistributionMap> {
    let values = slide.records.iter().map(|r| metric.value(r)).collect();
    normalize_map(metric.name(), slide.gx, slide.gy, values)
}

/// Writes `<metric>.png` and `<metric>.csv` for all six metrics plus
/// `metrics.csv` and `summary.txt`. Metrics with no defined cell render as
/// all-zero maps. Returns the written paths.
pub fn render_maps(slide: &SlideMorphometry, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fsutil::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for metric in MapMetric::ALL {
        let map = match distribution_map(slide, metric) {
            Ok(m) => m,
            Err(_) => DistributionMap {
                metric: metric.name().into(),
                gx: slide.gx,
                gy: slide.gy,
                raw: vec![None; slide.gx * slide.gy],
                normalized: vec![None; slide.gx * slide.gy],
            },
        };
        let png = out_dir.join(format!("{}.png", metric.name()));
        write_gray_png(&png, &map.to_image())?;
        let csv = out_dir.join(format!("{}.csv", metric.name()));
        fsutil::write_atomic(&csv, map.to_csv().as_bytes())?;
        written.push(png);
        written.push(csv);
    }
    let raw = out_dir.join(RAW_FILE);
    fsutil::write_atomic(&raw, raw_csv(slide).as_bytes())?;
    let summary = out_dir.join(SUMMARY_FILE);
    fsutil::write_atomic(&summary, format!("{}\n", slide.summary_line()).as_bytes())?;
    written.push(raw);
    written.push(summary);
    Ok(written)
}

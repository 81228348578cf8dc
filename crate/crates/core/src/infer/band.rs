//! Semi-automatic band expansion: predict the next strip of patch rows, hand
//! it to an external proofreader, ingest the corrections, repeat.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use super::tiling::{plan_tiles, predict_region, TilePredictor};
use crate::dataset::{read_label_file, write_label, MosaicManifest};
use crate::error::{Error, Result};
use crate::fsutil;

pub const BAND_INFO_FILE: &str = "BAND-INFO";
pub const BAND_INFO_MAGIC: &str = "BAND-INFO v1";
pub const PREDICTED_DIR: &str = "predicted";
pub const CORRECTED_DIR: &str = "corrected";

/// Exchange file name for patch `(ix, iy)`.
pub fn exchange_name(ix: u32, iy: u32) -> String {
    format!("pred_{ix}_{iy}.png")
}

/// Progress of the annotation front along y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandState {
    pub grid_ny: u32,
    /// Rows with ground truth (manual seed plus every ingested band).
    pub annotated: Range<u32>,
    /// Rows predicted and exported, awaiting proofreading.
    pub exported: Range<u32>,
    /// Rows whose labels came back from proofreading.
    pub proofread: Range<u32>,
    pub iteration: u32,
}

impl BandState {
    pub fn new(grid_ny: u32, annotated: Range<u32>) -> Result<Self> {
        if annotated.end > grid_ny || annotated.start > annotated.end {
            return Err(Error::invalid(format!("annotated rows {annotated:?} outside [0, {grid_ny})")));
        }
        Ok(Self {
            grid_ny,
            exported: annotated.end..annotated.end,
            proofread: annotated.end..annotated.end,
            annotated,
            iteration: 0,
        })
    }

    /// Derives the state from a manifest: the annotated range is the first run
    /// of rows whose every entry is annotated.
    pub fn from_manifest(manifest: &MosaicManifest) -> Result<Self> {
        let row_done = |iy: u32| {
            (0..manifest.grid_nx).all(|ix| manifest.get(ix, iy).is_some_and(|e| e.annotated))
        };
        let start = (0..manifest.grid_ny).find(|&iy| row_done(iy));
        let annotated = match start {
            Some(s) => s..(s..manifest.grid_ny).find(|&iy| !row_done(iy)).unwrap_or(manifest.grid_ny),
            None => 0..0,
        };
        Self::new(manifest.grid_ny, annotated)
    }

    /// Rows neither annotated nor exported.
    pub fn remaining(&self) -> Range<u32> {
        self.annotated.end.max(self.exported.end)..self.grid_ny
    }

    pub fn is_complete(&self) -> bool {
        self.remaining().is_empty() && self.exported.is_empty()
    }

    fn check(&self) {
        debug_assert!(
            self.proofread.is_empty()
                || (self.proofread.start >= self.annotated.start && self.proofread.end <= self.annotated.end)
        );
    }
}

/// Metadata shipped with every exported band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandInfo {
    pub iteration: u32,
    pub y_range: Range<u32>,
    pub x_range: Range<u32>,
    pub threshold: f64,
    pub snapshot: String,
    pub pixel_nm: f64,
    pub clipped: bool,
}

impl BandInfo {
    pub fn to_text(&self) -> String {
        let mut s = format!("{BAND_INFO_MAGIC}\n");
        let _ = writeln!(s, "iteration {}", self.iteration);
        let _ = writeln!(s, "y_range {} {}", self.y_range.start, self.y_range.end);
        let _ = writeln!(s, "x_range {} {}", self.x_range.start, self.x_range.end);
        let _ = writeln!(s, "threshold {}", self.threshold);
        let _ = writeln!(s, "snapshot {}", self.snapshot);
        let _ = writeln!(s, "pixel_nm {}", self.pixel_nm);
        let _ = writeln!(s, "clipped {}", u8::from(self.clipped));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(BAND_INFO_MAGIC) {
            return Err(Error::Config(format!("missing `{BAND_INFO_MAGIC}` header")));
        }
        let mut info = BandInfo {
            iteration: 0,
            y_range: 0..0,
            x_range: 0..0,
            threshold: 0.5,
            snapshot: String::new(),
            pixel_nm: 0.0,
            clipped: false,
        };
        let bad = |l: &str| Error::Config(format!("BAND-INFO: cannot parse `{l}`"));
        let range = |v: &[&str], l: &str| -> Result<Range<u32>> {
            match v {
                [a, b] => Ok(a.parse().map_err(|_| bad(l))?..b.parse().map_err(|_| bad(l))?),
                _ => Err(bad(l)),
            }
        };
        let mut seen_y = false;
        for l in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            let Some((&key, vals)) = parts.split_first() else { continue };
            match key {
                "iteration" => info.iteration = vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad(l))?,
                "y_range" => {
                    info.y_range = range(vals, l)?;
                    seen_y = true;
                }
                "x_range" => info.x_range = range(vals, l)?,
                "threshold" => info.threshold = vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad(l))?,
                "snapshot" => info.snapshot = vals.join(" "),
                "pixel_nm" => info.pixel_nm = vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad(l))?,
                "clipped" => info.clipped = vals.first() == Some(&"1"),
                _ => return Err(bad(l)),
            }
        }
        if !seen_y {
            return Err(Error::Config("BAND-INFO lacks y_range".into()));
        }
        Ok(info)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    pub threshold: f64,
    /// Tile stride; `None` means half the model input.
    pub stride_px: Option<usize>,
    /// Patches per horizontal inference chunk.
    pub chunk_cols: u32,
    /// Identifier of the model snapshot recorded in BAND-INFO.
    pub snapshot_id: String,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            stride_px: None,
            chunk_cols: 8,
            snapshot_id: "unknown".into(),
        }
    }
}

/// What one call to [`expand_band`] produced.
#[derive(Debug, Clone)]
pub struct BandExport {
    /// `None` when nothing remained to predict.
    pub band_dir: Option<PathBuf>,
    pub info: Option<BandInfo>,
    pub files: Vec<PathBuf>,
    pub complete: bool,
}

/// Predicts the next `band_height` rows after the annotated range, binarizes
/// them and writes the exchange directory `<out_dir>/band-NNN/`. The manifest
/// is untouched: exported rows only count as annotated after
/// [`ingest_corrections`].
pub fn expand_band<P: TilePredictor + ?Sized>(
    state: &BandState,
    predictor: &P,
    manifest: &MosaicManifest,
    band_height: u32,
    out_dir: &Path,
    opts: &ExpandOptions,
) -> Result<(BandState, BandExport)> {
    state.check();
    if band_height == 0 {
        return Err(Error::invalid("band height must be positive"));
    }
    if !state.exported.is_empty() {
        return Err(Error::invalid(format!(
            "rows {:?} are still awaiting proofreading",
            state.exported
        )));
    }
    let remaining = state.remaining();
    if remaining.is_empty() {
        log::info!("no rows left to predict; annotation is complete");
        return Ok((
            state.clone(),
            BandExport {
                band_dir: None,
                info: None,
                files: Vec::new(),
                complete: true,
            },
        ));
    }
    let end = remaining.start.saturating_add(band_height).min(state.grid_ny);
    let clipped = remaining.start + band_height > state.grid_ny;
    if clipped {
        log::info!(
            "band of {band_height} rows clipped to {} at the grid edge",
            end - remaining.start
        );
    }
    let rows = remaining.start..end;
    let iteration = state.iteration + 1;
    let band_dir = out_dir.join(format!("band-{iteration:03}"));
    let pred_dir = band_dir.join(PREDICTED_DIR);
    fsutil::create_dir_all(&pred_dir)?;

    let tile = predictor.tile_px();
    let stride = opts.stride_px.unwrap_or((tile / 2).max(1));
    let p = manifest.patch_px as usize;
    let chunk = opts.chunk_cols.max(1);
    let mut files = Vec::new();
    for iy in rows.clone() {
        let mut x0 = 0;
        while x0 < manifest.grid_nx {
            let x1 = (x0 + chunk).min(manifest.grid_nx);
            let present: Vec<u32> = (x0..x1).filter(|&ix| manifest.get(ix, iy).is_some()).collect();
            if present.len() as u32 == x1 - x0 {
                let plan = plan_tiles((x1 - x0) as usize * p, p, tile, stride)?;
                let prob = predict_region(predictor, manifest, x0..x1, iy..iy + 1, &plan)?;
                let mask = prob.to_class_mask(opts.threshold)?;
                for ix in x0..x1 {
                    let patch = mask.crop((ix - x0) as usize * p, 0, p, p);
                    let path = pred_dir.join(exchange_name(ix, iy));
                    write_label(&path, &patch)?;
                    files.push(path);
                }
            } else {
                // Sparse rows: predict present patches one at a time.
                for ix in present {
                    let plan = plan_tiles(p, p, tile, stride)?;
                    let prob = predict_region(predictor, manifest, ix..ix + 1, iy..iy + 1, &plan)?;
                    let path = pred_dir.join(exchange_name(ix, iy));
                    write_label(&path, &prob.to_class_mask(opts.threshold)?)?;
                    files.push(path);
                }
            }
            x0 = x1;
        }
    }
    let info = BandInfo {
        iteration,
        y_range: rows.clone(),
        x_range: 0..manifest.grid_nx,
        threshold: opts.threshold,
        snapshot: opts.snapshot_id.clone(),
        pixel_nm: manifest.pixel_nm,
        clipped,
    };
    fsutil::write_atomic(&band_dir.join(BAND_INFO_FILE), info.to_text().as_bytes())?;
    fsutil::create_dir_all(&band_dir.join(CORRECTED_DIR))?;
    let next = BandState {
        exported: rows,
        iteration,
        ..state.clone()
    };
    next.check();
    Ok((
        next,
        BandExport {
            band_dir: Some(band_dir),
            info: Some(info),
            files,
            complete: false,
        },
    ))
}

/// Locates BAND-INFO for a corrected directory: inside it, or in its parent.
pub fn find_band_info(corrected_dir: &Path) -> Result<PathBuf> {
    let inside = corrected_dir.join(BAND_INFO_FILE);
    if inside.is_file() {
        return Ok(inside);
    }
    let sibling = corrected_dir
        .parent()
        .map(|p| p.join(BAND_INFO_FILE))
        .filter(|p| p.is_file());
    sibling.ok_or_else(|| {
        Error::Config(format!(
            "no {BAND_INFO_FILE} in or beside {}",
            corrected_dir.display()
        ))
    })
}

/// Validates the proofread labels of the exported band and commits them: label
/// files are written under `labels/` beside the manifest, then the manifest is
/// replaced atomically. On any error the manifest on disk and in memory is unchanged.
pub fn ingest_corrections(
    state: &BandState,
    manifest: &mut MosaicManifest,
    manifest_path: &Path,
    corrected_dir: &Path,
) -> Result<BandState> {
    state.check();
    let info = BandInfo::load(&find_band_info(corrected_dir)?)?;
    let rows = info.y_range.clone();
    if !state.exported.is_empty() && state.exported != rows {
        return Err(Error::invalid(format!(
            "BAND-INFO covers rows {rows:?} but rows {:?} were exported",
            state.exported
        )));
    }
    if rows.start != state.annotated.end || rows.end > state.grid_ny || rows.is_empty() {
        return Err(Error::invalid(format!(
            "band rows {rows:?} do not extend the annotated rows {:?}",
            state.annotated
        )));
    }

    let coords: Vec<(u32, u32)> = rows
        .clone()
        .flat_map(|iy| (0..manifest.grid_nx).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| manifest.get(ix, iy).is_some())
        .collect();
    let missing: Vec<(u32, u32)> = coords
        .iter()
        .copied()
        .filter(|&(ix, iy)| !corrected_dir.join(exchange_name(ix, iy)).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCorrections(missing));
    }

    let mut masks = Vec::with_capacity(coords.len());
    let mut problems = Vec::new();
    for &(ix, iy) in &coords {
        let path = corrected_dir.join(exchange_name(ix, iy));
        match read_label_file(&path) {
            Ok(m) if m.width() == manifest.patch_px as usize && m.height() == manifest.patch_px as usize => {
                masks.push(m)
            }
            Ok(m) => problems.push(format!(
                "{}: {}x{} instead of {}x{}",
                path.display(),
                m.width(),
                m.height(),
                manifest.patch_px,
                manifest.patch_px
            )),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Invalid(format!(
            "rejected corrected labels:\n  {}",
            problems.join("\n  ")
        )));
    }

    let mut next_manifest = manifest.clone();
    for (&(ix, iy), mask) in coords.iter().zip(&masks) {
        let rel = PathBuf::from(format!("labels/label_{ix}_{iy}.png"));
        write_label(&next_manifest.resolve(&rel), mask)?;
        let e = next_manifest.get_mut(ix, iy).expect("coordinate present");
        e.label_path = Some(rel);
        e.annotated = true;
    }
    next_manifest.save(manifest_path)?;
    *manifest = next_manifest;

    let proofread = if state.proofread.is_empty() {
        rows.clone()
    } else {
        state.proofread.start..rows.end
    };
    let next = BandState {
        grid_ny: state.grid_ny,
        annotated: state.annotated.start..rows.end,
        exported: rows.end..rows.end,
        proofread,
        iteration: state.iteration.max(info.iteration),
    };
    next.check();
    Ok(next)
}

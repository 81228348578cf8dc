use std::fs::OpenOptions;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{CliError, Command};
use crate::dataset::{read_label, read_label_file, MosaicManifest, RegionRanges, RoiMask, SplitTag};
use crate::error::{Error, Result};
use crate::evaluate::{benchmark_csv, benchmark_report, IoUAccumulator, LocalResult, REFERENCE_RESULTS};
use crate::fsutil;
use crate::infer::{
    exchange_name, expand_band, ingest_corrections, plan_tiles, predict_region, BandState, ExpandOptions,
};
use crate::model::{surgery_import, Archive, EncoderConfig, SegModel, CONFIG_KEY};
use crate::morphometry::{parse_raw_csv, render_maps, slide_morphometry, MetricGridSpec};
use crate::synthgen::{generate_mosaic, SceneGrid};
use crate::train::{load_split, train_loop, TrainConfig, TrainOptions, TrainState, BEST_SNAPSHOT, STATE_KEY};

pub const TRAIN_LOG: &str = "train.log";

type CmdResult = std::result::Result<(), CliError>;

fn say(out: &mut (dyn Write + Send), msg: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{msg}").map_err(|e| Error::io("stdout", e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Copies a configuration file verbatim into the output directory.
fn keep_config(text: &str, out_dir: &Path, name: &str) -> Result<()> {
    fsutil::write_atomic(&out_dir.join(name), text.as_bytes())
}

pub(super) fn dispatch(cmd: Command, out: &mut (dyn Write + Send)) -> CmdResult {
    match cmd {
        Command::Synth { config, out: dir, common } => synth(&config, &dir, common.seed, out),
        Command::Train {
            manifest,
            config,
            checkpoint,
            out: dir,
            common,
        } => train(&manifest, &config, checkpoint.as_deref(), &dir, common.seed, out),
        Command::Expand {
            manifest,
            snapshot,
            band_height,
            threshold,
            stride,
            out: dir,
            ..
        } => expand(&manifest, &snapshot, band_height, threshold, stride, &dir, out),
        Command::Ingest { manifest, corrected, .. } => ingest(&manifest, &corrected, out),
        Command::Eval {
            manifest,
            snapshot,
            pred_dir,
            split,
            rows,
            threshold,
            out: dir,
            ..
        } => {
            let split: SplitTag = split
                .parse()
                .map_err(|_| CliError::Usage(format!("unknown split `{split}`")))?;
            eval(&manifest, snapshot.as_deref(), pred_dir.as_deref(), split, rows, threshold, dir.as_deref(), out)
        }
        Command::Morpho {
            manifest,
            roi,
            config,
            out: dir,
            ..
        } => morpho(&manifest, roi.as_deref(), config.as_deref(), &dir, out),
        Command::Maps {
            metrics,
            metric_pixel_nm,
            out: dir,
            ..
        } => maps(&metrics, metric_pixel_nm, &dir, out),
    }
}

fn synth(config: &Path, dir: &Path, seed: Option<u64>, out: &mut (dyn Write + Send)) -> CmdResult {
    let text = read_text(config)?;
    let grid_text = match seed {
        Some(s) => {
            let mut t: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            t.insert("seed".into(), toml::Value::Integer(s as i64));
            toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))?
        }
        None => text.clone(),
    };
    let grid = SceneGrid::from_toml_str(&grid_text)?;
    grid.validate()?;
    let mosaic = generate_mosaic(&grid, dir)?;
    keep_config(&text, dir, "synth.toml")?;
    say(
        out,
        format!(
            "wrote {} patches ({}x{}) to {}",
            mosaic.manifest.len(),
            grid.grid_nx,
            grid.grid_ny,
            mosaic.manifest_path.display()
        ),
    )?;
    Ok(())
}

/// Training job file: model shape, optimizer recipe and optional split rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    #[serde(default = "EncoderConfig::toy")]
    pub model: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Patch-row ranges `[start, end)` assigned to train/val/test before loading.
    pub regions: Option<JobRegions>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRegions {
    pub train: [u32; 2],
    pub val: [u32; 2],
    #[serde(default)]
    pub test: Option<[u32; 2]>,
}

impl TrainJob {
    /// Parses a job file. Keys absent from `[model]` take the toy values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut table: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        if let Some(toml::Value::Table(given)) = table.remove("model") {
            let mut model = toml::Table::try_from(EncoderConfig::toy()).map_err(|e| cfg_err(&e))?;
            model.extend(given);
            table.insert("model".into(), toml::Value::Table(model));
        }
        let job: TrainJob = table.try_into().map_err(|e: toml::de::Error| cfg_err(&e))?;
        job.model.validate()?;
        job.train.validate()?;
        Ok(job)
    }
}

fn train(
    manifest_path: &Path,
    config: &Path,
    checkpoint: Option<&Path>,
    dir: &Path,
    seed: Option<u64>,
    out: &mut (dyn Write + Send),
) -> CmdResult {
    let text = read_text(config)?;
    let mut job = TrainJob::from_toml_str(&text)?;
    if let Some(s) = seed {
        job.train.seed = s;
    }
    let mut manifest = MosaicManifest::load(manifest_path)?;
    if let Some(r) = &job.regions {
        let ranges = RegionRanges {
            genu: r.train[0]..r.train[1],
            body: r.val[0]..r.val[1],
            splenium: r.test.map_or(0..0, |t| t[0]..t[1]),
        };
        for w in manifest.assign_splits(&ranges)? {
            log::warn!("{w}");
        }
    }
    let train_set = load_split(&manifest, SplitTag::Train)?;
    if train_set.is_empty() {
        return Err(Error::invalid("manifest has no annotated train patches").into());
    }
    let val_set = load_split(&manifest, SplitTag::Val)?;
    if val_set.is_empty() {
        return Err(Error::invalid("manifest has no annotated val patches").into());
    }

    let (mut model, resume) = match checkpoint {
        None => (SegModel::init_random(&job.model, job.train.seed)?, None),
        Some(p) => {
            let archive = Archive::load(p)?;
            if archive.metadata.contains_key(STATE_KEY) {
                let (m, s) = TrainState::from_archive(&archive)?;
                say(out, format!("resuming from step {}", s.step))?;
                (m, Some(s))
            } else if archive.metadata.contains_key(CONFIG_KEY) {
                (SegModel::from_archive(&archive)?, None)
            } else {
                let (m, report) = surgery_import(&archive, &job.model, job.train.seed)?;
                fsutil::create_dir_all(dir)?;
                fsutil::write_atomic(&dir.join("load-report.txt"), report.to_string().as_bytes())?;
                say(
                    out,
                    format!(
                        "imported encoder: {} loaded, {} discarded, {} missing",
                        report.loaded.len(),
                        report.discarded.len(),
                        report.missing.len()
                    ),
                )?;
                (m, None)
            }
        }
    };
    if model.config() != &job.model {
        log::warn!("checkpoint model shape overrides the job's [model] section");
    }
    fsutil::create_dir_all(dir)?;
    keep_config(&text, dir, "train.toml")?;
    let log_path = dir.join(TRAIN_LOG);
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let state = train_loop(
        &mut model,
        &train_set,
        &val_set,
        &job.train,
        resume,
        TrainOptions {
            log: Some(&mut log),
            out_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
    )?;
    let best = dir.join(BEST_SNAPSHOT);
    if state.snapshot.is_none() && !best.exists() {
        model.save_snapshot(&best)?;
    }
    match (state.best_val_miou, state.best_step) {
        (Some(m), Some(s)) => say(out, format!("best val mIoU {m:.4} at step {s}; snapshot {}", best.display()))?,
        _ => say(out, format!("no evaluation ran; snapshot {}", best.display()))?,
    }
    Ok(())
}

/// Highest `band-NNN` number already present under `dir`.
fn last_band(dir: &Path) -> u32 {
    std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("band-")?.parse::<u32>().ok())
        .max()
        .unwrap_or(0)
}

fn expand(
    manifest_path: &Path,
    snapshot: &Path,
    band_height: u32,
    threshold: f64,
    stride: Option<usize>,
    dir: &Path,
    out: &mut (dyn Write + Send),
) -> CmdResult {
    let manifest = MosaicManifest::load(manifest_path)?;
    let model = SegModel::load_snapshot(snapshot)?;
    let mut state = BandState::from_manifest(&manifest)?;
    state.iteration = last_band(dir);
    let opts = ExpandOptions {
        threshold,
        stride_px: stride,
        snapshot_id: model.fingerprint()?[..16].to_string(),
        ..Default::default()
    };
    let (_, export) = expand_band(&state, &model, &manifest, band_height, dir, &opts)?;
    match (&export.band_dir, &export.info) {
        (Some(d), Some(info)) => {
            let clip = if info.clipped { " (clipped at grid edge)" } else { "" };
            say(
                out,
                format!(
                    "exported rows {}..{}{clip}: {} files in {}",
                    info.y_range.start,
                    info.y_range.end,
                    export.files.len(),
                    d.display()
                ),
            )?;
        }
        _ => say(out, "annotation complete: no rows left to predict")?,
    }
    Ok(())
}

fn ingest(manifest_path: &Path, corrected: &Path, out: &mut (dyn Write + Send)) -> CmdResult {
    let mut manifest = MosaicManifest::load(manifest_path)?;
    let state = BandState::from_manifest(&manifest)?;
    let next = ingest_corrections(&state, &mut manifest, manifest_path, corrected)?;
    // The rewritten manifest must parse back.
    MosaicManifest::load(manifest_path)?;
    say(
        out,
        format!(
            "annotated rows {}..{} (was {}..{})",
            next.annotated.start, next.annotated.end, state.annotated.start, state.annotated.end
        ),
    )?;
    Ok(())
}

/// Maximal runs of consecutive rows in `rows`.
fn row_runs(mut rows: Vec<u32>) -> Vec<Range<u32>> {
    rows.sort_unstable();
    rows.dedup();
    let mut runs: Vec<Range<u32>> = Vec::new();
    for r in rows {
        match runs.last_mut() {
            Some(last) if last.end == r => last.end = r + 1,
            _ => runs.push(r..r + 1),
        }
    }
    runs
}

#[allow(clippy::too_many_arguments)]
fn eval(
    manifest_path: &Path,
    snapshot: Option<&Path>,
    pred_dir: Option<&Path>,
    split: SplitTag,
    rows: Option<Range<u32>>,
    threshold: f64,
    dir: Option<&Path>,
    out: &mut (dyn Write + Send),
) -> CmdResult {
    let manifest = MosaicManifest::load(manifest_path)?;
    let (coords, region): (Vec<(u32, u32)>, String) = match &rows {
        Some(r) => {
            if r.end > manifest.grid_ny {
                return Err(Error::invalid(format!("rows {r:?} exceed the grid height {}", manifest.grid_ny)).into());
            }
            let c = manifest
                .entries()
                .keys()
                .copied()
                .filter(|&(_, iy)| r.contains(&iy))
                .collect();
            (c, format!("rows {}:{}", r.start, r.end))
        }
        None => (manifest.coords_in_split(split), split.to_string()),
    };
    let unlabelled: Vec<(u32, u32)> = coords
        .iter()
        .copied()
        .filter(|&(ix, iy)| !manifest.get(ix, iy).is_some_and(|e| e.annotated && e.label_path.is_some()))
        .collect();
    if coords.is_empty() {
        return Err(Error::invalid(format!("region {region} holds no patches")).into());
    }
    if !unlabelled.is_empty() {
        return Err(Error::MissingLabels(unlabelled).into());
    }
    let mut acc = IoUAccumulator::new(region.clone());
    let method = match (snapshot, pred_dir) {
        (_, Some(pd)) => {
            for &(ix, iy) in &coords {
                let pred = read_label_file(&pd.join(exchange_name(ix, iy)))?;
                acc.add(&pred, &read_label(&manifest, ix, iy)?)?;
            }
            format!("predictions {}", pd.display())
        }
        (Some(sp), None) => {
            let model = SegModel::load_snapshot(sp)?;
            let t = model.config().input_px;
            let p = manifest.patch_px as usize;
            let ys: Vec<u32> = coords.iter().map(|c| c.1).collect();
            for run in row_runs(ys) {
                let present: Vec<u32> = (0..manifest.grid_nx)
                    .filter(|&ix| run.clone().all(|iy| manifest.get(ix, iy).is_some()))
                    .collect();
                for ix in present {
                    let plan = plan_tiles(p, run.len() * p, t, (t / 2).max(1))?;
                    let prob = predict_region(&model, &manifest, ix..ix + 1, run.clone(), &plan)?;
                    let mask = prob.to_class_mask(threshold)?;
                    for (k, iy) in run.clone().enumerate() {
                        if coords.contains(&(ix, iy)) {
                            acc.add(&mask.crop(0, k * p, p, p), &read_label(&manifest, ix, iy)?)?;
                        }
                    }
                }
            }
            format!("snapshot {}", sp.display())
        }
        (None, None) => return Err(CliError::Usage("one of --snapshot or --pred-dir is required".into())),
    };
    let report = acc.report();
    let local = [LocalResult::from_report(method, &report)];
    say(out, format!("region {region}: {} patches, mIoU {:.4}", acc.patches(), report.miou()))?;
    say(out, benchmark_report(&local, &REFERENCE_RESULTS))?;
    if let Some(d) = dir {
        fsutil::create_dir_all(d)?;
        fsutil::write_atomic(&d.join("eval.csv"), benchmark_csv(&local, &REFERENCE_RESULTS).as_bytes())?;
    }
    Ok(())
}

fn morpho(manifest_path: &Path, roi: Option<&Path>, config: Option<&Path>, dir: &Path, out: &mut (dyn Write + Send)) -> CmdResult {
    let manifest = MosaicManifest::load(manifest_path)?;
    let (spec, text) = match config {
        Some(c) => {
            let text = read_text(c)?;
            let spec: MetricGridSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            (spec, Some(text))
        }
        None => (MetricGridSpec::default(), None),
    };
    spec.validate(&manifest)?;
    let (gx, gy) = spec.grid_dims(&manifest);
    say(out, format!("metric grid {gx}x{gy}"))?;
    let roi = match roi {
        Some(p) => RoiMask::load(p)?,
        None => RoiMask::all_inside(gx, gy),
    };
    let slide = slide_morphometry(&manifest, &spec, &roi)?;
    render_maps(&slide, dir)?;
    if let Some(t) = text {
        keep_config(&t, dir, "morpho.toml")?;
    }
    say(out, slide.summary_line())?;
    Ok(())
}

fn maps(metrics: &Path, metric_pixel_nm: f64, dir: &Path, out: &mut (dyn Write + Send)) -> CmdResult {
    let slide = parse_raw_csv(&read_text(metrics)?, metric_pixel_nm)?;
    let written: Vec<PathBuf> = render_maps(&slide, dir)?;
    say(out, format!("wrote {} files to {}", written.len(), dir.display()))?;
    say(out, slide.summary_line())?;
    Ok(())
}

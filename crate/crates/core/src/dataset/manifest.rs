use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsutil;

pub const MANIFEST_MAGIC: &str = "CALLOSUM-MANIFEST";
pub const MANIFEST_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unassigned,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            "unassigned" => Ok(SplitTag::Unassigned),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest; relative paths resolve against the manifest directory.
    pub image_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub split: SplitTag,
    pub annotated: bool,
}

/// Patch-grid index of one slide.
///
/// Patches are addressed by `(ix, iy)` with `ix` along x. The manifest does not
/// own pixel data; [`read_patch`](super::read_patch) and
/// [`read_label`](super::read_label) resolve entries lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicManifest {
    pub grid_nx: u32,
    pub grid_ny: u32,
    pub patch_px: u32,
    pub pixel_nm: f64,
    /// Directory that relative entry paths are resolved against.
    pub root: PathBuf,
    entries: BTreeMap<(u32, u32), ManifestEntry>,
}

/// Y-index row ranges for the three anatomical regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRanges {
    pub genu: Range<u32>,
    pub body: Range<u32>,
    pub splenium: Range<u32>,
}

impl MosaicManifest {
    pub fn new(grid_nx: u32, grid_ny: u32, patch_px: u32, pixel_nm: f64) -> Result<Self> {
        validate_geometry(grid_nx, grid_ny, patch_px, pixel_nm).map_err(Error::invalid)?;
        Ok(Self {
            grid_nx,
            grid_ny,
            patch_px,
            pixel_nm,
            root: PathBuf::from("."),
            entries: BTreeMap::new(),
        })
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn entries(&self) -> &BTreeMap<(u32, u32), ManifestEntry> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ix: u32, iy: u32) -> Option<&ManifestEntry> {
        self.entries.get(&(ix, iy))
    }

    pub fn get_mut(&mut self, ix: u32, iy: u32) -> Option<&mut ManifestEntry> {
        self.entries.get_mut(&(ix, iy))
    }

    pub fn entry(&self, ix: u32, iy: u32) -> Result<&ManifestEntry> {
        self.get(ix, iy).ok_or(Error::MissingEntry { ix, iy })
    }

    /// Adds or replaces an entry; the coordinate must lie inside the grid.
    pub fn insert(&mut self, ix: u32, iy: u32, entry: ManifestEntry) -> Result<Option<ManifestEntry>> {
        if ix >= self.grid_nx || iy >= self.grid_ny {
            return Err(Error::invalid(format!(
                "coordinate ({ix}, {iy}) outside grid {}x{}",
                self.grid_nx, self.grid_ny
            )));
        }
        Ok(self.entries.insert((ix, iy), entry))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// Coordinates carrying the given split tag, in (iy, ix) row-major order.
    pub fn coords_in_split(&self, split: SplitTag) -> Vec<(u32, u32)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .filter(|(_, e)| e.split == split)
            .map(|(&c, _)| c)
            .collect();
        v.sort_by_key(|&(x, y)| (y, x));
        v
    }

    /// Pixel extent of the full slide.
    pub fn extent_px(&self) -> (u64, u64) {
        (
            self.grid_nx as u64 * self.patch_px as u64,
            self.grid_ny as u64 * self.patch_px as u64,
        )
    }

    /// Tags rows in `genu`/`body`/`splenium` as train/val/test and every other
    /// entry as unassigned. Returns warnings for empty ranges.
    pub fn assign_splits(&mut self, ranges: &RegionRanges) -> Result<Vec<String>> {
        let named = [
            ("genu", &ranges.genu, SplitTag::Train),
            ("body", &ranges.body, SplitTag::Val),
            ("splenium", &ranges.splenium, SplitTag::Test),
        ];
        for (name, r, _) in &named {
            if r.start > r.end || r.end > self.grid_ny {
                return Err(Error::invalid(format!(
                    "{name} range {}..{} outside [0, {})",
                    r.start, r.end, self.grid_ny
                )));
            }
        }
        for i in 0..named.len() {
            for j in i + 1..named.len() {
                let (a, b) = (named[i].1, named[j].1);
                if a.start < b.end && b.start < a.end {
                    return Err(Error::invalid(format!(
                        "{} range {}..{} overlaps {} range {}..{}",
                        named[i].0, a.start, a.end, named[j].0, b.start, b.end
                    )));
                }
            }
        }
        let mut warnings = Vec::new();
        for (name, r, tag) in &named {
            if r.is_empty() {
                let msg = format!("{name} range is empty; {tag} split has no patches");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        for (&(_, iy), e) in self.entries.iter_mut() {
            e.split = named
                .iter()
                .find(|(_, r, _)| r.contains(&iy))
                .map(|&(_, _, tag)| tag)
                .unwrap_or(SplitTag::Unassigned);
        }
        Ok(warnings)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MANIFEST_MAGIC} {MANIFEST_VERSION} {} {} {} {}\n",
            self.grid_nx, self.grid_ny, self.patch_px, self.pixel_nm
        );
        for (&(ix, iy), e) in &self.entries {
            let label = e
                .label_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{ix}\t{iy}\t{}\t{label}\t{}\t{}\n",
                e.image_path.display(),
                e.split,
                u8::from(e.annotated)
            ));
        }
        s
    }

    /// Parses manifest text. `root` becomes the base for relative entry paths.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or(Error::Manifest {
            line: 1,
            msg: "empty manifest".into(),
        })?;
        let hdr_err = |msg: String| Error::Manifest { line: 1, msg };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != MANIFEST_MAGIC || fields[1] != MANIFEST_VERSION {
            return Err(hdr_err(format!(
                "expected header `{MANIFEST_MAGIC} {MANIFEST_VERSION} <grid_nx> <grid_ny> <patch_px> <pixel_nm>`"
            )));
        }
        let grid_nx: u32 = parse_field(fields[2], "grid_nx").map_err(hdr_err)?;
        let grid_ny: u32 = parse_field(fields[3], "grid_ny").map_err(hdr_err)?;
        let patch_px: u32 = parse_field(fields[4], "patch_px").map_err(hdr_err)?;
        let pixel_nm: f64 = parse_field(fields[5], "pixel_nm").map_err(hdr_err)?;
        validate_geometry(grid_nx, grid_ny, patch_px, pixel_nm).map_err(hdr_err)?;

        let mut entries = BTreeMap::new();
        for (line, raw) in lines {
            if raw.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Manifest { line, msg };
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 6 {
                return Err(err(format!("expected 6 tab-separated fields, found {}", cols.len())));
            }
            let ix: u32 = parse_field(cols[0], "ix").map_err(err)?;
            let iy: u32 = parse_field(cols[1], "iy").map_err(err)?;
            if ix >= grid_nx || iy >= grid_ny {
                return Err(err(format!(
                    "coordinate ({ix}, {iy}) out of range for grid {grid_nx}x{grid_ny}"
                )));
            }
            if cols[2].is_empty() {
                return Err(err("empty image path".into()));
            }
            let label_path = match cols[3] {
                "-" => None,
                "" => return Err(err("empty label path (use `-` for none)".into())),
                p => Some(PathBuf::from(p)),
            };
            let split: SplitTag = cols[4].parse().map_err(err)?;
            let annotated = match cols[5].trim_end_matches('\r') {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("annotated flag must be 0 or 1, found {other:?}"))),
            };
            if annotated && label_path.is_none() {
                return Err(err("annotated entry without a label path".into()));
            }
            let entry = ManifestEntry {
                image_path: PathBuf::from(cols[2]),
                label_path,
                split,
                annotated,
            };
            if entries.insert((ix, iy), entry).is_some() {
                return Err(err(format!("duplicate coordinate ({ix}, {iy})")));
            }
        }
        Ok(Self {
            grid_nx,
            grid_ny,
            patch_px,
            pixel_nm,
            root: root.into(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, root)
    }

    /// Writes the manifest through a temp file and rename, so readers never see
    /// a truncated manifest.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsutil::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

/// Convenience for [`MosaicManifest::load`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<MosaicManifest> {
    MosaicManifest::load(path)
}

fn validate_geometry(grid_nx: u32, grid_ny: u32, patch_px: u32, pixel_nm: f64) -> std::result::Result<(), String> {
    if grid_nx == 0 || grid_ny == 0 {
        return Err("grid dimensions must be positive".into());
    }
    if patch_px == 0 {
        return Err("patch_px must be positive".into());
    }
    if !(pixel_nm.is_finite() && pixel_nm > 0.0) {
        return Err(format!("pixel_nm must be positive, found {pixel_nm}"));
    }
    Ok(())
}

fn parse_field<T: FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("cannot parse {name} from {s:?}"))
}

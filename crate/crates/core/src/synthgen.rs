//! Synthetic EM-like patches with exactly known axon/myelin ground truth.
//!
//! Fibers are circles or capsules (a segment swept by a disk) with a myelin
//! annulus. Optional features reproduce the hard cases seen in real corpus
//! callosum sections: elongated long-range fibers, Node-of-Ranvier sheath gaps
//! and partially thinned (demyelinated) sheaths.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_gray_png, write_label, ClassMask, ManifestEntry, MosaicManifest, SplitTag, AXON, MYELIN,
};
use crate::error::{Error, Result};
use crate::fsutil;

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Minimum clearance in pixels between the outer boundaries of two fibers.
const FIBER_CLEARANCE: f64 = 2.0;
const BORDER_CLEARANCE: f64 = 1.0;

const AXOPLASM_GRAY: f64 = 185.0;
const MYELIN_GRAY: f64 = 40.0;
const BACKGROUND_GRAY: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub patch_px: u32,
    pub fiber_count: u32,
    /// Axon (inner) radius bounds in pixels.
    pub inner_radius_range: (f64, f64),
    pub g_ratio_range: (f64, f64),
    pub elongation_prob: f64,
    /// Half-length of an elongated fiber's straight section, as a multiple of its outer radius.
    pub elongation_range: (f64, f64),
    pub node_prob: f64,
    /// Angular width of a Node-of-Ranvier gap on circular fibers.
    pub node_arc_deg: f64,
    pub demyelination_prob: f64,
    /// Remaining sheath thickness on the thinned half, as a fraction of nominal.
    pub demyelination_fraction: f64,
    /// Gaussian noise standard deviation as a fraction of the 8-bit range.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            patch_px: 256,
            fiber_count: 8,
            inner_radius_range: (6.0, 14.0),
            g_ratio_range: (0.6, 0.8),
            elongation_prob: 0.1,
            elongation_range: (1.0, 3.0),
            node_prob: 0.1,
            node_arc_deg: 30.0,
            demyelination_prob: 0.1,
            demyelination_fraction: 0.3,
            noise_level: 0.03,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.patch_px == 0 {
            return bad("patch_px must be positive".into());
        }
        let (rmin, rmax) = self.inner_radius_range;
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return bad(format!("inner_radius_range ({rmin}, {rmax}) must satisfy 0 < min <= max"));
        }
        let (gmin, gmax) = self.g_ratio_range;
        if !(gmin > 0.0 && gmin <= gmax && gmax < 1.0) {
            return bad(format!("g_ratio_range ({gmin}, {gmax}) must satisfy 0 < min <= max < 1"));
        }
        if rmin * (1.0 / gmax - 1.0) < 1.0 {
            return bad(format!(
                "thinnest sheath {:.3} px (radius {rmin}, g {gmax}) is below one pixel",
                rmin * (1.0 / gmax - 1.0)
            ));
        }
        let (emin, emax) = self.elongation_range;
        if !(emin >= 0.0 && emin <= emax && emax.is_finite()) {
            return bad(format!("elongation_range ({emin}, {emax}) must satisfy 0 <= min <= max"));
        }
        for (name, p) in [
            ("elongation_prob", self.elongation_prob),
            ("node_prob", self.node_prob),
            ("demyelination_prob", self.demyelination_prob),
            ("demyelination_fraction", self.demyelination_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} must lie in [0, 1]"));
            }
        }
        if !(self.node_arc_deg > 0.0 && self.node_arc_deg < 360.0) {
            return bad(format!("node_arc_deg = {} must lie in (0, 360)", self.node_arc_deg));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise_level = {} must be non-negative", self.noise_level));
        }
        Ok(())
    }
}

/// Ground truth for one placed fiber. Positions are in pixels with the origin
/// at the top-left corner of the patch; pixel `(x, y)` has its center at
/// `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberRecord {
    pub center: (f64, f64),
    /// Axis direction in radians.
    pub orientation: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Half-length of the straight section; zero for circular fibers.
    pub half_length: f64,
    pub elongated: bool,
    pub node: bool,
    pub demyelinated: bool,
    pub axon_area_px: u64,
    pub myelin_area_px: u64,
}

impl FiberRecord {
    pub fn g_ratio(&self) -> f64 {
        self.inner_radius / self.outer_radius
    }

    /// Exact area of the axon shape (disk or capsule).
    pub fn analytic_axon_area(&self) -> f64 {
        PI * self.inner_radius.powi(2) + 4.0 * self.half_length * self.inner_radius
    }

    /// Diameter of the circle with the axon's analytic area.
    pub fn analytic_equivalent_diameter(&self) -> f64 {
        (4.0 * self.analytic_axon_area() / PI).sqrt()
    }

    pub fn fiber_area_px(&self) -> u64 {
        self.axon_area_px + self.myelin_area_px
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: GrayImage,
    pub mask: ClassMask,
    pub fibers: Vec<FiberRecord>,
}

#[derive(Debug, Clone)]
enum NodeGap {
    Arc { center_angle: f64, half_width: f64 },
    Band { axial_center: f64, half_width: f64 },
}

#[derive(Debug, Clone)]
struct Fiber {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    theta: f64,
    inner: f64,
    outer: f64,
    half_len: f64,
    node: Option<NodeGap>,
    /// Unit vector selecting the thinned half-plane, and the thinned outer radius.
    thinned: Option<(f64, f64, f64)>,
}

impl Fiber {
    /// Axial coordinate and distance of `(px, py)` to the fiber's core segment.
    fn axial_and_distance(&self, px: f64, py: f64) -> (f64, f64) {
        let (dx, dy) = (px - self.cx, py - self.cy);
        let t = dx * self.ax + dy * self.ay;
        let tc = t.clamp(-self.half_len, self.half_len);
        let (qx, qy) = (dx - tc * self.ax, dy - tc * self.ay);
        (t, (qx * qx + qy * qy).sqrt())
    }

    fn classify(&self, px: f64, py: f64) -> u8 {
        let (t, d) = self.axial_and_distance(px, py);
        if d <= self.inner {
            return AXON;
        }
        let outer = match self.thinned {
            Some((ux, uy, r)) if (px - self.cx) * ux + (py - self.cy) * uy >= 0.0 => r,
            _ => self.outer,
        };
        if d > outer {
            return 0;
        }
        let in_gap = match self.node {
            Some(NodeGap::Arc {
                center_angle,
                half_width,
            }) => {
                let a = (py - self.cy).atan2(px - self.cx);
                angle_diff(a, center_angle) <= half_width
            }
            Some(NodeGap::Band {
                axial_center,
                half_width,
            }) => (t - axial_center).abs() <= half_width,
            None => false,
        };
        if in_gap {
            0
        } else {
            MYELIN
        }
    }

    fn extent(&self) -> (f64, f64) {
        (
            self.half_len * self.ax.abs() + self.outer,
            self.half_len * self.ay.abs() + self.outer,
        )
    }

    fn endpoints(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.cx - self.half_len * self.ax, self.cy - self.half_len * self.ay),
            (self.cx + self.half_len * self.ax, self.cy + self.half_len * self.ay),
        )
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn point_segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * abx - p.0, a.1 + t * aby - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Minimum distance between two closed segments.
fn segment_distance(a: ((f64, f64), (f64, f64)), b: ((f64, f64), (f64, f64))) -> f64 {
    let (d1, d2) = (cross(b.0, b.1, a.0), cross(b.0, b.1, a.1));
    let (d3, d4) = (cross(a.0, a.1, b.0), cross(a.0, a.1, b.1));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    point_segment_dist(a.0, b.0, b.1)
        .min(point_segment_dist(a.1, b.0, b.1))
        .min(point_segment_dist(b.0, a.0, a.1))
        .min(point_segment_dist(b.1, a.0, a.1))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn draw_fiber(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Fiber {
    let n = spec.patch_px as f64;
    let inner = uniform(rng, spec.inner_radius_range);
    let g = uniform(rng, spec.g_ratio_range);
    let outer = inner / g;
    let elongated = rng.random_bool(spec.elongation_prob);
    let half_len = if elongated {
        uniform(rng, spec.elongation_range) * outer
    } else {
        0.0
    };
    let theta = rng.random_range(0.0..PI);
    let (ax, ay) = (theta.cos(), theta.sin());
    let ext_x = half_len * ax.abs() + outer + BORDER_CLEARANCE;
    let ext_y = half_len * ay.abs() + outer + BORDER_CLEARANCE;
    // An infeasible extent yields a center outside the patch, which the caller rejects.
    let cx = if n - ext_x > ext_x { rng.random_range(ext_x..n - ext_x) } else { -1.0 };
    let cy = if n - ext_y > ext_y { rng.random_range(ext_y..n - ext_y) } else { -1.0 };
    Fiber {
        cx,
        cy,
        ax,
        ay,
        theta,
        inner,
        outer,
        half_len,
        node: None,
        thinned: None,
    }
}

fn fits(f: &Fiber, n: f64, placed: &[Fiber]) -> bool {
    let (ex, ey) = f.extent();
    if f.cx - ex < BORDER_CLEARANCE
        || f.cy - ey < BORDER_CLEARANCE
        || f.cx + ex > n - BORDER_CLEARANCE
        || f.cy + ey > n - BORDER_CLEARANCE
    {
        return false;
    }
    placed
        .iter()
        .all(|o| segment_distance(f.endpoints(), o.endpoints()) >= f.outer + o.outer + FIBER_CLEARANCE)
}

/// Renders one synthetic patch. Deterministic in `spec.seed`.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.patch_px as usize;
    let nf = n as f64;

    let mut fibers: Vec<Fiber> = Vec::with_capacity(spec.fiber_count as usize);
    for _ in 0..spec.fiber_count {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let f = draw_fiber(spec, &mut rng);
            if fits(&f, nf, &fibers) {
                placed = Some(f);
                break;
            }
        }
        let Some(mut f) = placed else {
            return Err(Error::InfeasiblePacking {
                placed: fibers.len(),
                requested: spec.fiber_count as usize,
            });
        };
        if rng.random_bool(spec.node_prob) {
            f.node = Some(if f.half_len > 0.0 {
                NodeGap::Band {
                    axial_center: rng.random_range(-f.half_len..=f.half_len),
                    half_width: 0.5 * f.outer,
                }
            } else {
                NodeGap::Arc {
                    center_angle: rng.random_range(-PI..PI),
                    half_width: 0.5 * spec.node_arc_deg.to_radians(),
                }
            });
        }
        if rng.random_bool(spec.demyelination_prob) {
            let phi: f64 = rng.random_range(-PI..PI);
            let r = f.inner + spec.demyelination_fraction * (f.outer - f.inner);
            f.thinned = Some((phi.cos(), phi.sin(), r));
        }
        fibers.push(f);
    }

    let mut mask = ClassMask::zeros(n, n);
    let mut records = Vec::with_capacity(fibers.len());
    for f in &fibers {
        let (ex, ey) = f.extent();
        let x0 = (f.cx - ex).floor().max(0.0) as usize;
        let x1 = ((f.cx + ex).ceil() as usize).min(n);
        let y0 = (f.cy - ey).floor().max(0.0) as usize;
        let y1 = ((f.cy + ey).ceil() as usize).min(n);
        let (mut axon_px, mut myelin_px) = (0u64, 0u64);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = f.classify(x as f64 + 0.5, y as f64 + 0.5);
                if c != 0 {
                    debug_assert_eq!(mask.get(x, y), 0, "fibers overlap");
                    mask.set(x, y, c);
                    if c == AXON {
                        axon_px += 1;
                    } else {
                        myelin_px += 1;
                    }
                }
            }
        }
        records.push(FiberRecord {
            center: (f.cx, f.cy),
            orientation: f.theta,
            inner_radius: f.inner,
            outer_radius: f.outer,
            half_length: f.half_len,
            elongated: f.half_len > 0.0,
            node: f.node.is_some(),
            demyelinated: f.thinned.is_some(),
            axon_area_px: axon_px,
            myelin_area_px: myelin_px,
        });
    }

    let image = render(&mask, spec, &mut rng);
    Ok(SyntheticScene {
        image,
        mask,
        fibers: records,
    })
}

fn render(mask: &ClassMask, spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> GrayImage {
    let n = mask.width();
    // Low-frequency texture standing in for glial processes and extracellular space.
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.01..0.06) * TAU;
            let dir = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..TAU);
            let amp = rng.random_range(4.0..8.0);
            (freq * dir.cos(), freq * dir.sin(), phase, amp)
        })
        .collect();
    let sigma = spec.noise_level * 255.0;
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let base = match mask.get(x, y) {
                AXON => AXOPLASM_GRAY,
                MYELIN => MYELIN_GRAY,
                _ => {
                    let (fx, fy) = (x as f64, y as f64);
                    BACKGROUND_GRAY
                        + waves
                            .iter()
                            .map(|&(kx, ky, ph, amp)| amp * (kx * fx + ky * fy + ph).sin())
                            .sum::<f64>()
                }
            };
            let v = if sigma > 0.0 { base + noise.sample(rng) } else { base };
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::from_raw(n as u32, n as u32, out).expect("square buffer")
}

/// Row-major grid of scene specs sharing one patch size.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrid {
    pub grid_nx: u32,
    pub grid_ny: u32,
    pub pixel_nm: f64,
    specs: Vec<SyntheticSceneSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneGridFile {
    grid_nx: u32,
    grid_ny: u32,
    #[serde(default = "default_pixel_nm")]
    pixel_nm: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    scene: toml::Table,
    #[serde(default, rename = "override")]
    overrides: Vec<toml::Table>,
}

fn default_pixel_nm() -> f64 {
    4.0
}

impl SceneGrid {
    /// Builds a grid where every patch uses `base` with a per-patch seed derived
    /// from `base.seed` and the patch coordinate.
    pub fn uniform(grid_nx: u32, grid_ny: u32, pixel_nm: f64, base: &SyntheticSceneSpec) -> Self {
        let mut specs = Vec::with_capacity((grid_nx * grid_ny) as usize);
        for iy in 0..grid_ny {
            for ix in 0..grid_nx {
                specs.push(SyntheticSceneSpec {
                    seed: patch_seed(base.seed, ix, iy),
                    ..base.clone()
                });
            }
        }
        Self {
            grid_nx,
            grid_ny,
            pixel_nm,
            specs,
        }
    }

    pub fn from_specs(grid_nx: u32, grid_ny: u32, pixel_nm: f64, specs: Vec<SyntheticSceneSpec>) -> Result<Self> {
        if specs.len() != (grid_nx * grid_ny) as usize {
            return Err(Error::invalid(format!(
                "{} specs for a {grid_nx}x{grid_ny} grid",
                specs.len()
            )));
        }
        Ok(Self {
            grid_nx,
            grid_ny,
            pixel_nm,
            specs,
        })
    }

    /// Parses the TOML grid configuration: top-level `grid_nx`, `grid_ny`,
    /// `pixel_nm`, `seed`, a `[scene]` table of defaults and optional
    /// `[[override]]` tables keyed by `ix`/`iy`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SceneGridFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.grid_nx == 0 || file.grid_ny == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        let mut overrides: BTreeMap<(u32, u32), toml::Table> = BTreeMap::new();
        for mut o in file.overrides {
            let coord = |t: &mut toml::Table, k: &str| -> Result<u32> {
                t.remove(k)
                    .and_then(|v| v.as_integer())
                    .and_then(|v| u32::try_from(v).ok())
                    .ok_or_else(|| Error::Config(format!("override needs a non-negative integer `{k}`")))
            };
            let (ix, iy) = (coord(&mut o, "ix")?, coord(&mut o, "iy")?);
            if ix >= file.grid_nx || iy >= file.grid_ny {
                return Err(Error::Config(format!("override ({ix}, {iy}) outside the grid")));
            }
            overrides.insert((ix, iy), o);
        }
        let mut specs = Vec::new();
        for iy in 0..file.grid_ny {
            for ix in 0..file.grid_nx {
                let mut table = file.scene.clone();
                if let Some(o) = overrides.get(&(ix, iy)) {
                    table.extend(o.clone());
                }
                let explicit_seed = table.contains_key("seed");
                let mut spec: SyntheticSceneSpec = table
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Config(format!("patch ({ix}, {iy}): {e}")))?;
                if !explicit_seed {
                    spec.seed = patch_seed(file.seed, ix, iy);
                }
                specs.push(spec);
            }
        }
        Self::from_specs(file.grid_nx, file.grid_ny, file.pixel_nm, specs)
    }

    pub fn spec(&self, ix: u32, iy: u32) -> &SyntheticSceneSpec {
        &self.specs[(iy * self.grid_nx + ix) as usize]
    }

    pub fn spec_mut(&mut self, ix: u32, iy: u32) -> &mut SyntheticSceneSpec {
        &mut self.specs[(iy * self.grid_nx + ix) as usize]
    }

    pub fn patch_px(&self) -> Result<u32> {
        let p = self.specs[0].patch_px;
        if self.specs.iter().any(|s| s.patch_px != p) {
            return Err(Error::invalid("all scene specs in a grid must share patch_px"));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.patch_px()?;
        for (i, s) in self.specs.iter().enumerate() {
            s.validate().map_err(|e| {
                Error::invalid(format!(
                    "patch ({}, {}): {e}",
                    i as u32 % self.grid_nx,
                    i as u32 / self.grid_nx
                ))
            })?;
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over the base seed and the patch coordinate.
pub fn patch_seed(base: u64, ix: u32, iy: u32) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((iy as u64) << 32 | ix as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generated mosaic: its manifest plus the per-patch fiber ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticMosaic {
    pub manifest: MosaicManifest,
    pub manifest_path: PathBuf,
    pub fibers: BTreeMap<(u32, u32), Vec<FiberRecord>>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const FIBERS_FILE: &str = "fibers.csv";

/// Writes `images/`, `labels/`, `fibers.csv` and `manifest.tsv` under `out_dir`.
/// Every patch is an independent scene; fibers never cross patch borders.
pub fn generate_mosaic(grid: &SceneGrid, out_dir: &Path) -> Result<SyntheticMosaic> {
    grid.validate()?;
    let patch_px = grid.patch_px()?;
    let mut manifest = MosaicManifest::new(grid.grid_nx, grid.grid_ny, patch_px, grid.pixel_nm)?
        .with_root(out_dir);
    fsutil::create_dir_all(&out_dir.join("images"))?;
    fsutil::create_dir_all(&out_dir.join("labels"))?;

    let mut fibers = BTreeMap::new();
    let mut csv = String::from(
        "ix,iy,center_x,center_y,orientation,inner_radius,outer_radius,half_length,elongated,node,demyelinated,axon_px,myelin_px\n",
    );
    for iy in 0..grid.grid_ny {
        for ix in 0..grid.grid_nx {
            let scene = generate_scene(grid.spec(ix, iy))?;
            let image_rel = PathBuf::from(format!("images/img_{ix}_{iy}.png"));
            let label_rel = PathBuf::from(format!("labels/label_{ix}_{iy}.png"));
            write_gray_png(&out_dir.join(&image_rel), &scene.image)?;
            write_label(&out_dir.join(&label_rel), &scene.mask)?;
            for f in &scene.fibers {
                let _ = writeln!(
                    csv,
                    "{ix},{iy},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
                    f.center.0,
                    f.center.1,
                    f.orientation,
                    f.inner_radius,
                    f.outer_radius,
                    f.half_length,
                    u8::from(f.elongated),
                    u8::from(f.node),
                    u8::from(f.demyelinated),
                    f.axon_area_px,
                    f.myelin_area_px
                );
            }
            manifest.insert(
                ix,
                iy,
                ManifestEntry {
                    image_path: image_rel,
                    label_path: Some(label_rel),
                    split: SplitTag::Unassigned,
                    annotated: true,
                },
            )?;
            fibers.insert((ix, iy), scene.fibers);
        }
    }
    fsutil::write_atomic(&out_dir.join(FIBERS_FILE), csv.as_bytes())?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(SyntheticMosaic {
        manifest,
        manifest_path,
        fibers,
    })
}

use std::path::Path;

use image::GrayImage;

use super::io::{read_gray, write_gray_png};
use crate::error::{Error, Result};

/// Region-of-interest flags at metric-patch resolution; `true` is inside the
/// corpus callosum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    gx: usize,
    gy: usize,
    cells: Vec<bool>,
}

impl RoiMask {
    pub fn all_inside(gx: usize, gy: usize) -> Self {
        Self {
            gx,
            gy,
            cells: vec![true; gx * gy],
        }
    }

    pub fn from_cells(gx: usize, gy: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != gx * gy {
            return Err(Error::invalid(format!(
                "ROI holds {} cells, expected {gx}x{gy}",
                cells.len()
            )));
        }
        Ok(Self { gx, gy, cells })
    }

    /// Loads an ROI image: one pixel per metric patch, nonzero meaning inside.
    pub fn load(path: &Path) -> Result<Self> {
        let img = read_gray(path)?;
        let (gx, gy) = (img.width() as usize, img.height() as usize);
        Ok(Self {
            gx,
            gy,
            cells: img.into_raw().into_iter().map(|v| v != 0).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = self.cells.iter().map(|&c| if c { 255 } else { 0 }).collect();
        let img = GrayImage::from_raw(self.gx as u32, self.gy as u32, raw).expect("roi dims");
        write_gray_png(path, &img)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.gx, self.gy)
    }

    pub fn inside(&self, gx: usize, gy: usize) -> bool {
        self.cells[gy * self.gx + gx]
    }

    pub fn count_inside(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

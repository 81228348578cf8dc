use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat};

use super::mask::ClassMask;
use super::manifest::MosaicManifest;
use crate::error::{Error, Result};
use crate::fsutil;

/// Decodes any supported raster as 8-bit grayscale.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    Ok(img.into_luma8())
}

/// Encodes an 8-bit grayscale buffer as PNG through a temp-then-rename write.
pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    fsutil::write_atomic(path, buf.get_ref())
}

/// Reads the grayscale patch at `(ix, iy)`, checking it is `patch_px` square.
pub fn read_patch(manifest: &MosaicManifest, ix: u32, iy: u32) -> Result<GrayImage> {
    let entry = manifest.entry(ix, iy)?;
    let path = manifest.resolve(&entry.image_path);
    let img = read_gray(&path)?;
    check_dims(&path, img.width(), img.height(), manifest.patch_px)?;
    Ok(img)
}

/// Reads the label of an annotated entry as a validated [`ClassMask`].
pub fn read_label(manifest: &MosaicManifest, ix: u32, iy: u32) -> Result<ClassMask> {
    let entry = manifest.entry(ix, iy)?;
    let label = match (&entry.label_path, entry.annotated) {
        (Some(p), true) => p,
        _ => return Err(Error::NoLabel { ix, iy }),
    };
    let path = manifest.resolve(label);
    let mask = read_label_file(&path)?;
    check_dims(&path, mask.width() as u32, mask.height() as u32, manifest.patch_px)?;
    Ok(mask)
}

/// Reads an indexed label image, rejecting any value outside {0, 1, 2}.
pub fn read_label_file(path: &Path) -> Result<ClassMask> {
    let img = read_gray(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    ClassMask::from_vec(w, h, img.into_raw()).map_err(|e| match e {
        Error::InvalidClass { value, .. } => Error::InvalidClass {
            context: path.display().to_string(),
            value,
        },
        e => e,
    })
}

pub fn write_label(path: &Path, mask: &ClassMask) -> Result<()> {
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.values().to_vec())
        .expect("mask buffer matches its dimensions");
    write_gray_png(path, &img)
}

fn check_dims(path: &Path, w: u32, h: u32, patch_px: u32) -> Result<()> {
    if w != patch_px || h != patch_px {
        return Err(Error::DimensionMismatch {
            context: path.display().to_string(),
            expected_w: patch_px as usize,
            expected_h: patch_px as usize,
            width: w as usize,
            height: h as usize,
        });
    }
    Ok(())
}

//! Slide manifests, patch and label IO, label downsampling and ROI masks.

mod io;
mod manifest;
mod mask;
mod roi;

pub use io::{read_gray, read_label, read_label_file, read_patch, write_gray_png, write_label};
pub use manifest::{
    load_manifest, ManifestEntry, MosaicManifest, RegionRanges, SplitTag, MANIFEST_MAGIC,
    MANIFEST_VERSION,
};
pub use mask::{downsample_labels, ClassMask, AXON, BACKGROUND, MYELIN};
pub use roi::RoiMask;

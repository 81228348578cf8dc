//! Tiled inference over mosaics and the band-expansion annotation loop.

mod band;
mod tiling;

pub use band::{
    exchange_name, expand_band, find_band_info, ingest_corrections, BandExport, BandInfo,
    BandState, ExpandOptions, BAND_INFO_FILE, BAND_INFO_MAGIC, CORRECTED_DIR, PREDICTED_DIR,
};
pub(crate) use tiling::reflect;
pub use tiling::{
    plan_tiles, predict_image, predict_region, read_region, FloatImage, TilePredictor, TilingPlan,
};

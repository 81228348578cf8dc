//! Segmentation network: ViT encoder, convolutional decoder, snapshots and
//! checkpoint surgery.

mod archive;
mod config;
mod layers;
mod net;
mod prob;
mod resample;
mod surgery;

pub use archive::{Archive, CONFIG_KEY, FINGERPRINT_KEY};
pub use config::{default_taps, EncoderConfig, DECODER_DOUBLINGS};
pub use net::{SegModel, DECODER_PREFIX, ENCODER_PREFIX};
pub use prob::{targets_from_mask, ProbabilityPair};
pub use resample::resample_bicubic;
pub use surgery::{surgery_import, surgery_import_with, DiscardReason, LoadReport, Resampled};

use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("no manifest entry at ({ix}, {iy})")]
    MissingEntry { ix: u32, iy: u32 },

    #[error("patch ({ix}, {iy}) has no label")]
    NoLabel { ix: u32, iy: u32 },

    #[error("{context}: expected {expected_w}x{expected_h} pixels, found {width}x{height}")]
    DimensionMismatch {
        context: String,
        expected_w: usize,
        expected_h: usize,
        width: usize,
        height: usize,
    },

    #[error("{context}: invalid class value {value}")]
    InvalidClass { context: String, value: u8 },

    #[error("infeasible packing: placed {placed} of {requested} fibers")]
    InfeasiblePacking { placed: usize, requested: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss {loss} at step {step} (lr {lr}, batch {batch:?})")]
    NonFiniteLoss {
        step: usize,
        lr: f64,
        loss: f64,
        batch: Vec<String>,
    },

    #[error("missing corrected labels for {}", fmt_coords(.0))]
    MissingCorrections(Vec<(u32, u32)>),

    #[error("missing labels for {}", fmt_coords(.0))]
    MissingLabels(Vec<(u32, u32)>),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad input data or configuration rather than
    /// a failure of the machinery itself.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Tensor(_) | Error::NonFiniteLoss { .. }
        )
    }
}

fn fmt_coords(coords: &[(u32, u32)]) -> String {
    coords
        .iter()
        .map(|(x, y)| format!("({x}, {y})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

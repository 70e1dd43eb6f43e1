//! Error type shared by every module, with stable machine-readable codes
//! for CLI diagnostics.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask dimensions {got:?} do not match {expected:?}")]
    MaskDimMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },

    #[error("malformed RLE: {0}")]
    MalformedRle(String),

    #[error("cost matrix entry at ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },

    #[error("irregular cost matrix: row {row} has {got} columns, expected {expected}")]
    IrregularMatrix {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("class index {index} out of range for {num_classes} classes")]
    ClassIndex { index: usize, num_classes: usize },

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    EmbeddingDim { expected: usize, got: usize },

    #[error("embedding contains a non-finite value")]
    NonFiniteEmbedding,

    #[error("probability {0} outside (0, 1]")]
    ProbabilityRange(f64),

    #[error("label {label} exceeds reference count {refs}")]
    LabelRange { label: usize, refs: usize },

    #[error("brute-force assignment limited to 8 rows and columns, got {rows}x{cols}")]
    BruteForceSize { rows: usize, cols: usize },

    #[error("frame index {frame} not greater than last active frame {last}")]
    FrameOrder { frame: u64, last: u64 },

    #[error("cannot place {objects} anchors with >= 60 degree separation in dimension {dim}")]
    AnchorSeparation { objects: usize, dim: usize },

    #[error("invalid scenario config: {0}")]
    ScenarioConfig(String),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error("invalid file: {0}")]
    Schema(String),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable code for machine consumption on the CLI error stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MaskDimMismatch { .. } => "E_MASK_DIM",
            Error::MalformedRle(_) => "E_RLE",
            Error::NonFiniteCost { .. } => "E_COST_NONFINITE",
            Error::IrregularMatrix { .. } => "E_COST_SHAPE",
            Error::ClassIndex { .. } => "E_CLASS_INDEX",
            Error::EmbeddingDim { .. } => "E_EMBED_DIM",
            Error::NonFiniteEmbedding => "E_EMBED_NONFINITE",
            Error::ProbabilityRange(_) => "E_PROB_RANGE",
            Error::LabelRange { .. } => "E_LABEL_RANGE",
            Error::BruteForceSize { .. } => "E_BRUTE_FORCE_SIZE",
            Error::FrameOrder { .. } => "E_FRAME_ORDER",
            Error::AnchorSeparation { .. } => "E_ANCHOR_SEPARATION",
            Error::ScenarioConfig(_) => "E_SCENARIO_CONFIG",
            Error::FormatVersion(_) => "E_FORMAT_VERSION",
            Error::Schema(_) => "E_SCHEMA",
            Error::Json(_) => "E_JSON",
        }
    }
}

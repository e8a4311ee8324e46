//! Dataset ingestion and serialization: ICDAR 2015 and MSRA-TD500
//! ground-truth parsers, the detection file writer, geometric
//! augmentation, and the binary target container.
//!
//! The artifact operates on geometry plus image dimensions; pixel
//! payloads are out of scope, so "images" here are ids with sizes.

mod augment;
mod container;
mod parse;

pub use augment::{augment_sample, AugmentConfig, AugmentDraw};
pub use container::{load_targets, save_targets, TargetFile, CONTAINER_VERSION};
pub use parse::{
    parse_detections_file, parse_detections_line, parse_icdar_file, parse_icdar_line,
    parse_td500_file, parse_td500_line, write_detections, write_icdar_file,
};

use crate::geometry::Quad;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt target file: {0}")]
    CorruptFile(String),
    #[error("no annotation survived augmentation")]
    EmptyResult,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn malformed(message: impl Into<String>) -> Self {
        Self::MalformedLine {
            line: 0,
            message: message.into(),
        }
    }

    /// Attach the 1-based line number a file-level parser is at.
    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            Self::MalformedLine { message, .. } => Self::MalformedLine { line, message },
            other => other,
        }
    }
}

/// One ground-truth region: its quad in pixels, the transcription, and
/// whether the region is excluded ("###" in ICDAR, difficulty flag in
/// TD500).
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub quad: Quad,
    pub text: String,
    pub ignore: bool,
}

/// An image's worth of ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
}

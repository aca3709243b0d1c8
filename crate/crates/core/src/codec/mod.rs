//! Latent compression.
//!
//! Two stages, applied in order:
//!
//! 1. **Intra-step**: within one step, frames that are near-copies of an
//!    earlier key frame are dropped and recorded in a [`KeyFrameMap`].
//! 2. **Inter-step**: across the cached steps, key frames present in every
//!    step (the *common* set) are stored once for a chosen *base* step. Every
//!    other step keeps only its first frame and one scalar `α` per common key
//!    frame, reconstructing `key = first + α · (base_key − base_first)`. Key
//!    frames outside the common set are stored verbatim as *extra frames*.
//!
//! [`CompressedEntry::to_bytes`] defines the exact on-disk layout, and
//! [`compressed_size`] predicts its length without serializing.

mod alpha;
mod entry;
mod format;
mod keyframe;

use thiserror::Error;

use crate::latent::{ShapeError, StepId};
use crate::wire::DecodeError;

pub use alpha::{solve_alpha, Diff, DiffSet};
pub use entry::{
    compressed_size, decompress_step, inter_compress, inter_compress_with_base, CompressedEntry,
    StepRecord, BASE_TIE_EPSILON,
};
pub use format::SizeBreakdown;
pub use keyframe::{
    intra_compress, intra_decompress, select_keyframes, IntraCompressed, KeyFrameMap,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("similarity threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("shape mismatch")]
    ShapeMismatch,
    #[error("base differential is all zero")]
    DegenerateBase,
    #[error("no steps to compress")]
    NoSteps,
    #[error("step {0} given twice")]
    DuplicateStep(StepId),
    #[error("step {0} is not cached in this entry")]
    StepNotCached(StepId),
    #[error("invalid key-frame map: {0}")]
    InvalidMap(String),
    #[error("mask dimensions do not match the latent")]
    MaskMismatch,
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

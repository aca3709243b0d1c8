//! Cosine similarity over vectors and frames.

use thiserror::Error;

use crate::latent::{Frame, FrameShape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty vectors")]
    Empty,
    #[error("zero-norm operand")]
    ZeroNorm,
    #[error("frame shape mismatch: {0} vs {1}")]
    ShapeMismatch(FrameShape, FrameShape),
}

/// `dot(a, b) / (|a| |b|)`, accumulated in `f64` and clamped to `[-1, 1]`.
///
/// The denominator is `sqrt(|a|² |b|²)`, so a vector compared with itself
/// scores exactly `1.0`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine similarity of two frames' flattened elements.
pub fn frame_similarity(f1: &Frame, f2: &Frame) -> Result<f64, SimilarityError> {
    if f1.shape() != f2.shape() {
        return Err(SimilarityError::ShapeMismatch(f1.shape(), f2.shape()));
    }
    cosine_similarity(f1.data(), f2.data())
}

/// Dot product accumulated in `f64`.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

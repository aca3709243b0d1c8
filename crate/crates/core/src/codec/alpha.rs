//! Differentials between key frames and the first frame, and the scalar
//! least-squares fit that relates one step's differential to another's.

use crate::latent::Frame;
use crate::similarity::dot;

use super::CodecError;

/// Elementwise `key - first` for one key frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Diff(Vec<f32>);

impl Diff {
    pub fn between(key: &Frame, first: &Frame) -> Result<Self, CodecError> {
        if key.shape() != first.shape() {
            return Err(CodecError::ShapeMismatch);
        }
        Ok(Self(
            key.data()
                .iter()
                .zip(first.data())
                .map(|(k, f)| k - f)
                .collect(),
        ))
    }

    pub fn from_values(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Differentials of a step's key frames, keyed by frame index (index 0 is
/// never present; its differential is zero by definition).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffSet {
    entries: Vec<(u32, Diff)>,
}

impl DiffSet {
    /// Differentials of the listed key frames against `first`.
    pub fn of<'a>(
        first: &Frame,
        keys: impl IntoIterator<Item = (u32, &'a Frame)>,
    ) -> Result<Self, CodecError> {
        let entries = keys
            .into_iter()
            .filter(|(i, _)| *i != 0)
            .map(|(i, f)| Ok((i, Diff::between(f, first)?)))
            .collect::<Result<_, CodecError>>()?;
        Ok(Self { entries })
    }

    pub fn get(&self, index: u32) -> Option<&Diff> {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .ok()
            .map(|p| &self.entries[p].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u32, Diff)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Least-squares scale `α` minimizing `Σ (diff_s − α·diff_base)²` over all
/// elements: `α = Σ diff_s·diff_base / Σ diff_base²`.
pub fn solve_alpha(diff_s: &[f32], diff_base: &[f32]) -> Result<f32, CodecError> {
    if diff_s.len() != diff_base.len() {
        return Err(CodecError::ShapeMismatch);
    }
    let denom = dot(diff_base, diff_base);
    if denom == 0.0 {
        return Err(CodecError::DegenerateBase);
    }
    Ok((dot(diff_s, diff_base) / denom) as f32)
}

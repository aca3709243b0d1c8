//! Domain types shared by every module: frames, latent states, step ids,
//! embeddings, masks and prompt ids.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;

/// Errors raised when constructing domain values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("dimension {name} must be > 0")]
    ZeroDimension { name: &'static str },
    #[error("expected {expected} elements, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("element {index} is not finite")]
    NonFinite { index: usize },
    #[error("frame {index} has shape {actual}, expected {expected}")]
    FrameShape {
        index: usize,
        expected: FrameShape,
        actual: FrameShape,
    },
    #[error("a latent state needs at least one frame")]
    NoFrames,
    #[error("step {0} outside 1..=50")]
    StepOutOfRange(u32),
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("embedding norm {0} is not 1 within tolerance")]
    NotNormalized(f64),
    #[error("mask set has {object} object and {background} background bitmaps")]
    MaskCount { object: usize, background: usize },
    #[error("bitmap is {actual_h}x{actual_w}, expected {expected_h}x{expected_w}")]
    MaskShape {
        expected_h: usize,
        expected_w: usize,
        actual_h: usize,
        actual_w: usize,
    },
}

/// Height, width and channel count of one latent frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FrameShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self, ShapeError> {
        for (name, v) in [("height", height), ("width", width), ("channels", channels)] {
            if v == 0 {
                return Err(ShapeError::ZeroDimension { name });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn elements(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Bytes of one frame stored as raw `f32`.
    pub fn bytes(&self) -> usize {
        self.elements() * 4
    }
}

impl Default for FrameShape {
    fn default() -> Self {
        Self {
            height: defaults::LATENT_HEIGHT,
            width: defaults::LATENT_WIDTH,
            channels: defaults::LATENT_CHANNELS,
        }
    }
}

impl fmt::Display for FrameShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// One latent frame: `height × width × channels` floats, row-major with the
/// channel index varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    shape: FrameShape,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(shape: FrameShape, data: Vec<f32>) -> Result<Self, ShapeError> {
        if data.len() != shape.elements() {
            return Err(ShapeError::LengthMismatch {
                expected: shape.elements(),
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: FrameShape, value: f32) -> Result<Self, ShapeError> {
        Self::new(shape, vec![value; shape.elements()])
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Channel values of the pixel at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let c = self.shape.channels;
        let start = (row * self.shape.width + col) * c;
        &self.data[start..start + c]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Bit-level equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Frame) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Denoising step index in `1..=50`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct StepId(u8);

impl StepId {
    pub const MAX: u32 = defaults::TOTAL_STEPS;
    pub const FIRST: StepId = StepId(1);
    pub const LAST: StepId = StepId(defaults::TOTAL_STEPS as u8);

    pub fn new(value: u32) -> Result<Self, ShapeError> {
        if (1..=Self::MAX).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(ShapeError::StepOutOfRange(value))
        }
    }

    pub fn get(self) -> u32 {
        u32::from(self.0)
    }

    pub fn is_cacheable(self) -> bool {
        defaults::CACHED_STEPS.contains(&self.get())
    }

    /// The five cacheable steps, ascending.
    pub fn cached() -> [StepId; 5] {
        defaults::CACHED_STEPS.map(|s| StepId(s as u8))
    }

    /// Cacheable steps strictly after `self`, ascending.
    pub fn cached_after(self) -> Vec<StepId> {
        Self::cached().into_iter().filter(|s| *s > self).collect()
    }
}

impl TryFrom<u32> for StepId {
    type Error = ShapeError;
    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StepId> for u32 {
    fn from(s: StepId) -> u32 {
        s.get()
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Frame count plus per-frame shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub frame: FrameShape,
}

impl LatentShape {
    pub fn bytes(&self) -> usize {
        self.frames * self.frame.bytes()
    }
}

impl Default for LatentShape {
    fn default() -> Self {
        Self {
            frames: defaults::LATENT_FRAMES,
            frame: FrameShape::default(),
        }
    }
}

/// The latent of one denoising step: an ordered list of same-shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    step: StepId,
    frames: Vec<Frame>,
}

impl LatentState {
    pub fn new(step: StepId, frames: Vec<Frame>) -> Result<Self, ShapeError> {
        let first = frames.first().ok_or(ShapeError::NoFrames)?.shape();
        for (index, f) in frames.iter().enumerate() {
            if f.shape() != first {
                return Err(ShapeError::FrameShape {
                    index,
                    expected: first,
                    actual: f.shape(),
                });
            }
        }
        Ok(Self { step, frames })
    }

    pub fn step(&self) -> StepId {
        self.step
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn shape(&self) -> LatentShape {
        LatentShape {
            frames: self.frames.len(),
            frame: self.frames[0].shape(),
        }
    }

    pub fn bit_eq(&self, other: &LatentState) -> bool {
        self.step == other.step
            && self.frames.len() == other.frames.len()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| a.bit_eq(b))
    }
}

/// Which description an embedding encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Whole,
    Object,
    Background,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [Self::Whole, Self::Object, Self::Background];
}

/// Unit-norm similarity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    kind: EmbeddingKind,
    values: Vec<f32>,
}

const NORM_TOLERANCE: f64 = 1e-6;

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn new(kind: EmbeddingKind, values: Vec<f32>) -> Result<Self, ShapeError> {
        if values.is_empty() {
            return Err(ShapeError::LengthMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite { index });
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(ShapeError::ZeroEmbedding);
        }
        let values = values
            .into_iter()
            .map(|v| (f64::from(v) / norm) as f32)
            .collect();
        Ok(Self { kind, values })
    }

    /// Accepts values that are already unit-norm without touching their bits.
    pub fn from_normalized(kind: EmbeddingKind, values: Vec<f32>) -> Result<Self, ShapeError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite { index });
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(ShapeError::NotNormalized(norm));
        }
        Ok(Self { kind, values })
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn with_kind(mut self, kind: EmbeddingKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Opaque prompt/request identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub u64);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Packed 1-bit-per-pixel bitmap, row-major, LSB first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl Bitmap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![0; Self::packed_len(height, width)],
        }
    }

    pub fn packed_len(height: usize, width: usize) -> usize {
        (height * width).div_ceil(8)
    }

    pub fn from_packed(height: usize, width: usize, bits: Vec<u8>) -> Result<Self, ShapeError> {
        let expected = Self::packed_len(height, width);
        if bits.len() != expected {
            return Err(ShapeError::LengthMismatch {
                expected,
                actual: bits.len(),
            });
        }
        let mut map = Self {
            height,
            width,
            bits,
        };
        // Padding bits past the last pixel are always clear.
        let used = height * width;
        if !used.is_multiple_of(8) {
            if let Some(last) = map.bits.last_mut() {
                *last &= (1u8 << (used % 8)) - 1;
            }
        }
        Ok(map)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut map = Self::empty(height, width);
        for r in 0..height {
            for c in 0..width {
                map.set(r, c, f(r, c));
            }
        }
        map
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        let i = row * self.width + col;
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = row * self.width + col;
        if value {
            self.bits[i / 8] |= 1 << (i % 8);
        } else {
            self.bits[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| !self.get(r, c))
    }
}

/// Per-frame object and background membership bitmaps at latent resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    object: Vec<Bitmap>,
    background: Vec<Bitmap>,
}

impl MaskSet {
    pub fn new(object: Vec<Bitmap>, background: Vec<Bitmap>) -> Result<Self, ShapeError> {
        if object.len() != background.len() || object.is_empty() {
            return Err(ShapeError::MaskCount {
                object: object.len(),
                background: background.len(),
            });
        }
        let (h, w) = (object[0].height, object[0].width);
        for b in object.iter().chain(&background) {
            if b.height != h || b.width != w {
                return Err(ShapeError::MaskShape {
                    expected_h: h,
                    expected_w: w,
                    actual_h: b.height,
                    actual_w: b.width,
                });
            }
        }
        Ok(Self { object, background })
    }

    /// Masks where the background is the complement of the object.
    pub fn from_object(object: Vec<Bitmap>) -> Result<Self, ShapeError> {
        let background = object.iter().map(Bitmap::complement).collect();
        Self::new(object, background)
    }

    /// Empty object masks (everything background).
    pub fn all_background(shape: LatentShape) -> Self {
        let h = shape.frame.height;
        let w = shape.frame.width;
        let object = vec![Bitmap::empty(h, w); shape.frames];
        let background = vec![Bitmap::empty(h, w).complement(); shape.frames];
        Self { object, background }
    }

    pub fn frames(&self) -> usize {
        self.object.len()
    }

    pub fn height(&self) -> usize {
        self.object[0].height
    }

    pub fn width(&self) -> usize {
        self.object[0].width
    }

    pub fn object(&self) -> &[Bitmap] {
        &self.object
    }

    pub fn background(&self) -> &[Bitmap] {
        &self.background
    }

    /// Packed bytes of both mask sets.
    pub fn byte_len(&self) -> usize {
        2 * self.frames() * Bitmap::packed_len(self.height(), self.width())
    }

    pub fn matches(&self, shape: LatentShape) -> bool {
        self.frames() == shape.frames
            && self.height() == shape.frame.height
            && self.width() == shape.frame.width
    }
}

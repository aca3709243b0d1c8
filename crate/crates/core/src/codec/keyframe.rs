//! Intra-step compression: keep only key frames and a map from every frame
//! to the key frame that stands in for it.

use crate::latent::{Frame, LatentShape, LatentState, StepId};
use crate::similarity::frame_similarity;

use super::CodecError;

/// `map[j]` is the index of the key frame representing frame `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFrameMap {
    map: Vec<u32>,
}

impl KeyFrameMap {
    /// Checks the structural invariants: frame 0 is a key frame, key frames
    /// map to themselves, and every other frame maps to an earlier key frame.
    pub fn new(map: Vec<u32>) -> Result<Self, CodecError> {
        if map.first() != Some(&0) {
            return Err(CodecError::InvalidMap("frame 0 must be a key frame".into()));
        }
        for (j, &k) in map.iter().enumerate() {
            let k = k as usize;
            if k > j {
                return Err(CodecError::InvalidMap(format!(
                    "frame {j} maps forward to {k}"
                )));
            }
            if map[k] as usize != k {
                return Err(CodecError::InvalidMap(format!(
                    "frame {j} maps to non-key frame {k}"
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(frames: usize) -> Self {
        Self {
            map: (0..frames as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn target(&self, frame: usize) -> usize {
        self.map[frame] as usize
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.map
    }

    pub fn is_key(&self, frame: usize) -> bool {
        self.map[frame] as usize == frame
    }

    /// Key frame indices, ascending.
    pub fn key_frames(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.map.len()).filter(|&j| self.is_key(j))
    }

    pub fn key_count(&self) -> usize {
        self.key_frames().count()
    }

    /// Number of frames (including itself) represented by key frame `k`.
    pub fn multiplicity(&self, k: usize) -> usize {
        self.map.iter().filter(|&&t| t as usize == k).count()
    }
}

/// Similarity used for redundancy detection. Zero frames have no direction,
/// so they only match a bit-identical frame.
pub(crate) fn match_score(a: &Frame, b: &Frame) -> f64 {
    match frame_similarity(a, b) {
        Ok(s) => s,
        Err(_) if a.bit_eq(b) => 1.0,
        Err(_) => 0.0,
    }
}

/// Chooses key frames for one latent state.
///
/// A frame is redundant when some earlier key frame scores at least
/// `threshold` against it; it then maps to the best-scoring such key frame,
/// ties going to the smaller index. Frame 0 is always a key frame. Key status
/// of frame `j` depends only on the key frames before it, which makes the
/// assignment unique and keeps every map target a key frame.
pub fn select_keyframes(latent: &LatentState, threshold: f64) -> Result<KeyFrameMap, CodecError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CodecError::Threshold(threshold));
    }
    let frames = latent.frames();
    let mut map = Vec::with_capacity(frames.len());
    let mut keys: Vec<usize> = Vec::new();
    for (j, frame) in frames.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for &k in &keys {
            let s = match_score(frame, &frames[k]);
            if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
        }
        match best {
            Some((k, _)) => map.push(k as u32),
            None => {
                keys.push(j);
                map.push(j as u32);
            }
        }
    }
    Ok(KeyFrameMap { map })
}

/// Key frames of one step plus the map that expands them back.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraCompressed {
    step: StepId,
    keyframes: Vec<(u32, Frame)>,
    map: KeyFrameMap,
}

impl IntraCompressed {
    pub fn new(
        step: StepId,
        keyframes: Vec<(u32, Frame)>,
        map: KeyFrameMap,
    ) -> Result<Self, CodecError> {
        let keys: Vec<u32> = map.key_frames().map(|k| k as u32).collect();
        let stored: Vec<u32> = keyframes.iter().map(|(i, _)| *i).collect();
        if keys != stored {
            return Err(CodecError::InvalidMap(
                "stored key frames differ from the map's key frames".into(),
            ));
        }
        if let Some((_, f0)) = keyframes.first() {
            if keyframes.iter().any(|(_, f)| f.shape() != f0.shape()) {
                return Err(CodecError::ShapeMismatch);
            }
        }
        Ok(Self {
            step,
            keyframes,
            map,
        })
    }

    pub fn step(&self) -> StepId {
        self.step
    }

    pub fn keyframes(&self) -> &[(u32, Frame)] {
        &self.keyframes
    }

    pub fn map(&self) -> &KeyFrameMap {
        &self.map
    }

    pub fn shape(&self) -> LatentShape {
        LatentShape {
            frames: self.map.len(),
            frame: self.keyframes[0].1.shape(),
        }
    }

    pub fn first_frame(&self) -> &Frame {
        &self.keyframes[0].1
    }

    pub fn keyframe(&self, index: u32) -> Option<&Frame> {
        self.keyframes
            .binary_search_by_key(&index, |(i, _)| *i)
            .ok()
            .map(|p| &self.keyframes[p].1)
    }
}

/// Keeps bit-exact copies of the key frames and drops everything else.
pub fn intra_compress(latent: &LatentState, threshold: f64) -> Result<IntraCompressed, CodecError> {
    let map = select_keyframes(latent, threshold)?;
    let keyframes = map
        .key_frames()
        .map(|k| (k as u32, latent.frames()[k].clone()))
        .collect();
    Ok(IntraCompressed {
        step: latent.step(),
        keyframes,
        map,
    })
}

/// Repeats each key frame into the positions that map to it.
pub fn intra_decompress(c: &IntraCompressed) -> LatentState {
    let frames = (0..c.map.len())
        .map(|j| {
            c.keyframe(c.map.target(j) as u32)
                .expect("map targets are stored key frames")
                .clone()
        })
        .collect();
    LatentState::new(c.step, frames).expect("key frames share one shape")
}

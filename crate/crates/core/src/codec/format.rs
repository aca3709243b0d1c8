//! Byte layout of a [`CompressedEntry`], little-endian throughout.
//!
//! ```text
//! shared section
//!   u64  prompt id
//!   u32  frames, u32 height, u32 width, u32 channels
//!   u8   base step
//!   u8   number of stored steps (S)
//!   u32  number of common key frames other than frame 0 (N)
//!   N  × u32  common key-frame indices, ascending
//!   frame     base first frame
//!   N  × frame base key frames at the common indices
//!   F  × packed bitmap  object masks
//!   F  × packed bitmap  background masks
//! S step records, ascending by step
//!   u8   step
//!   F  × u16  key-frame map
//!   [frame, N × f32 alpha]      omitted for the base step
//!   u32  number of extra frames (E)
//!   E  × (u32 index, frame)
//! u32  CRC32 of every preceding byte of the entry
//! ```
//!
//! A frame is `height × width × channels` raw `f32`s.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::latent::{Bitmap, Frame, FrameShape, LatentShape, MaskSet, PromptId, StepId};
use crate::wire::{DecodeError, Reader, Writer};

use super::entry::{CompressedEntry, StepRecord};
use super::keyframe::KeyFrameMap;
use super::CodecError;

/// Encoded bytes of a [`CompressedEntry`] by content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SizeBreakdown {
    pub first_frames: usize,
    pub base_keyframes: usize,
    pub alphas: usize,
    pub extra_frames: usize,
    pub maps: usize,
    pub masks: usize,
    /// Ids, counts, indices and the checksum.
    pub headers: usize,
}

impl SizeBreakdown {
    pub fn total(&self) -> usize {
        self.first_frames
            + self.base_keyframes
            + self.alphas
            + self.extra_frames
            + self.maps
            + self.masks
            + self.headers
    }
}

/// Fixed part of the shared section, including the trailing CRC.
const SHARED_FIXED: usize = 8 + 16 + 1 + 1 + 4 + 4;
/// Step id byte plus the extra-frame count.
const STEP_FIXED: usize = 1 + 4;

impl CompressedEntry {
    /// Bytes kept alive while any step of this entry is cached.
    pub fn shared_bytes(&self) -> usize {
        let n = self.common.len();
        let fb = self.shape.frame.bytes();
        SHARED_FIXED + 4 * n + (1 + n) * fb + self.masks.byte_len()
    }

    /// Bytes freed when `step` alone is dropped; 0 if it is not stored.
    pub fn step_bytes(&self, step: StepId) -> usize {
        let Some(rec) = self.steps.get(&step) else {
            return 0;
        };
        let fb = self.shape.frame.bytes();
        let mut n = STEP_FIXED + 2 * self.shape.frames + rec.extras.len() * (4 + fb);
        if step != self.base_step {
            n += fb + 4 * self.common.len();
        }
        n
    }

    pub fn encoded_len(&self) -> usize {
        self.shared_bytes()
            + self
                .steps
                .keys()
                .map(|&s| self.step_bytes(s))
                .sum::<usize>()
    }

    pub fn size_breakdown(&self) -> SizeBreakdown {
        let fb = self.shape.frame.bytes();
        let n = self.common.len();
        let non_base = self.steps.keys().filter(|&&s| s != self.base_step).count();
        let extras: usize = self.steps.values().map(|r| r.extras.len()).sum();
        let b = SizeBreakdown {
            first_frames: fb * (1 + non_base),
            base_keyframes: fb * n,
            alphas: 4 * n * non_base,
            extra_frames: fb * extras,
            maps: 2 * self.shape.frames * self.steps.len(),
            masks: self.masks.byte_len(),
            headers: SHARED_FIXED + 4 * n + STEP_FIXED * self.steps.len() + 4 * extras,
        };
        debug_assert_eq!(b.total(), self.encoded_len());
        b
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(self.encoded_len());
        self.write_to(&mut w);
        w.into_inner()
    }

    pub(crate) fn write_to(&self, w: &mut Writer) {
        let start = w.len();
        let fs = self.shape.frame;
        w.u64(self.prompt.0);
        w.u32(self.shape.frames as u32);
        w.u32(fs.height as u32);
        w.u32(fs.width as u32);
        w.u32(fs.channels as u32);
        w.u8(self.base_step.get() as u8);
        w.u8(self.steps.len() as u8);
        w.u32(self.common.len() as u32);
        for &i in &self.common {
            w.u32(i);
        }
        w.f32s(self.base_first.data());
        for f in &self.base_keyframes {
            w.f32s(f.data());
        }
        for b in self.masks.object().iter().chain(self.masks.background()) {
            w.bytes(b.packed());
        }
        for (step, rec) in &self.steps {
            w.u8(step.get() as u8);
            for &t in rec.map.as_slice() {
                w.u16(t as u16);
            }
            if let Some(first) = &rec.first_frame {
                w.f32s(first.data());
                w.f32s(&rec.alphas);
            }
            w.u32(rec.extras.len() as u32);
            for (i, f) in &rec.extras {
                w.u32(*i);
                w.f32s(f.data());
            }
        }
        let crc = w.crc_since(start);
        w.u32(crc);
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let entry = Self::read_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(r.invalid("trailing bytes after entry").into());
        }
        Ok(entry)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let start = r.pos();
        let prompt = PromptId(r.u64()?);
        let frames = r.u32()? as usize;
        let fs = FrameShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize)?;
        if frames == 0 || frames > usize::from(u16::MAX) + 1 {
            return Err(r.invalid(format!("frame count {frames}")).into());
        }
        let shape = LatentShape { frames, frame: fs };
        let base_step = step_id(r)?;
        let n_steps = r.u8()? as usize;
        let n_common = r.u32()? as usize;
        if n_common >= frames {
            return Err(r
                .invalid(format!("{n_common} common key frames for {frames} frames"))
                .into());
        }
        let mut common = Vec::with_capacity(n_common);
        for _ in 0..n_common {
            common.push(r.u32()?);
        }
        if common.windows(2).any(|w| w[0] >= w[1]) || common.first() == Some(&0) {
            return Err(r
                .invalid("common indices must be ascending and nonzero")
                .into());
        }
        if common.last().is_some_and(|&i| i as usize >= frames) {
            return Err(r.invalid("common index out of range").into());
        }
        let base_first = frame(r, fs)?;
        let base_keyframes = (0..n_common)
            .map(|_| frame(r, fs))
            .collect::<Result<Vec<_>, _>>()?;
        let plen = Bitmap::packed_len(fs.height, fs.width);
        let mut bitmaps = Vec::with_capacity(2 * frames);
        for _ in 0..2 * frames {
            let raw = r.take(plen)?.to_vec();
            bitmaps.push(Bitmap::from_packed(fs.height, fs.width, raw)?);
        }
        let background = bitmaps.split_off(frames);
        let masks = MaskSet::new(bitmaps, background)?;

        let mut steps = BTreeMap::new();
        let mut prev: Option<StepId> = None;
        for _ in 0..n_steps {
            let step = step_id(r)?;
            if prev.is_some_and(|p| p >= step) {
                return Err(r.invalid("steps must be ascending").into());
            }
            prev = Some(step);
            let mut map = Vec::with_capacity(frames);
            for _ in 0..frames {
                map.push(u32::from(r.u16()?));
            }
            let map_pos = r.pos();
            let map = KeyFrameMap::new(map).map_err(|e| DecodeError::Invalid {
                pos: map_pos,
                msg: e.to_string(),
            })?;
            let (first_frame, alphas) = if step == base_step {
                (None, Vec::new())
            } else {
                let f = frame(r, fs)?;
                let a = r.f32s(n_common)?;
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(r.invalid("non-finite alpha").into());
                }
                (Some(f), a)
            };
            let n_extra = r.u32()? as usize;
            if n_extra > frames {
                return Err(r.invalid(format!("{n_extra} extra frames")).into());
            }
            let mut extras: Vec<(u32, Frame)> = Vec::with_capacity(n_extra);
            for _ in 0..n_extra {
                let i = r.u32()?;
                if extras.last().is_some_and(|(p, _)| *p >= i) || i == 0 || i as usize >= frames {
                    return Err(r.invalid(format!("extra frame index {i}")).into());
                }
                extras.push((i, frame(r, fs)?));
            }
            for k in map.key_frames() {
                let k = k as u32;
                let ok = k == 0
                    || common.binary_search(&k).is_ok()
                    || extras.binary_search_by_key(&k, |(i, _)| *i).is_ok();
                if !ok {
                    return Err(r
                        .invalid(format!("key frame {k} of step {step} has no source"))
                        .into());
                }
            }
            steps.insert(
                step,
                StepRecord {
                    first_frame,
                    map,
                    alphas,
                    extras,
                },
            );
        }
        r.expect_crc(start)?;
        Ok(CompressedEntry {
            prompt,
            shape,
            base_step,
            common,
            base_first,
            base_keyframes,
            masks,
            steps,
        })
    }
}

fn step_id(r: &mut Reader<'_>) -> Result<StepId, CodecError> {
    let pos = r.pos();
    let v = r.u8()?;
    StepId::new(u32::from(v)).map_err(|e| {
        DecodeError::Invalid {
            pos,
            msg: e.to_string(),
        }
        .into()
    })
}

fn frame(r: &mut Reader<'_>, fs: FrameShape) -> Result<Frame, CodecError> {
    let pos = r.pos();
    let data = r.f32s(fs.elements())?;
    Frame::new(fs, data).map_err(|e| {
        DecodeError::Invalid {
            pos,
            msg: e.to_string(),
        }
        .into()
    })
}

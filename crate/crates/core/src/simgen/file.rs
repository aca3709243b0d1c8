//! Latent file: raw step latents and masks of one prompt.
//!
//! ```text
//! "LTCL"  u16 version  u32 frames  u32 height  u32 width  u32 channels
//! u8 steps; per step: u8 step id, frames × frame (raw f32)
//! frames × packed object bitmap, frames × packed background bitmap
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use crate::latent::{Bitmap, Frame, FrameShape, LatentState, MaskSet, StepId};
use crate::store::SnapshotError;
use crate::wire::{DecodeError, Reader, Writer};

pub const LATENT_FILE_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"LTCL";

/// Panics if `latents` is empty or the latents and masks disagree in shape.
pub fn latents_to_bytes(latents: &[LatentState], masks: &MaskSet) -> Vec<u8> {
    let shape = latents[0].shape();
    assert!(latents.iter().all(|l| l.shape() == shape) && masks.matches(shape));
    let mut w = Writer::with_capacity(shape.bytes() * latents.len() + masks.byte_len() + 32);
    w.bytes(MAGIC);
    w.u16(LATENT_FILE_VERSION);
    w.u32(shape.frames as u32);
    w.u32(shape.frame.height as u32);
    w.u32(shape.frame.width as u32);
    w.u32(shape.frame.channels as u32);
    w.u8(latents.len() as u8);
    for l in latents {
        w.u8(l.step().get() as u8);
        for f in l.frames() {
            w.f32s(f.data());
        }
    }
    for b in masks.object().iter().chain(masks.background()) {
        w.bytes(b.packed());
    }
    let crc = w.crc_since(0);
    w.u32(crc);
    w.into_inner()
}

pub fn latents_from_bytes(bytes: &[u8]) -> Result<(Vec<LatentState>, MaskSet), DecodeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(DecodeError::BadMagic { pos: 0 });
    }
    let version = r.u16()?;
    if version != LATENT_FILE_VERSION {
        return Err(DecodeError::Version { pos: 4, version });
    }
    let pos = r.pos();
    let frames = r.u32()? as usize;
    let fs =
        FrameShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize).map_err(|e| {
            DecodeError::Invalid {
                pos,
                msg: e.to_string(),
            }
        })?;
    if frames == 0 {
        return Err(DecodeError::Invalid {
            pos,
            msg: "zero frames".into(),
        });
    }
    let n = r.u8()? as usize;
    if n == 0 {
        return Err(r.invalid("no steps"));
    }
    let mut latents = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = r.pos();
        let step = StepId::new(u32::from(r.u8()?)).map_err(|e| DecodeError::Invalid {
            pos,
            msg: e.to_string(),
        })?;
        let mut fr = Vec::with_capacity(frames);
        for _ in 0..frames {
            let pos = r.pos();
            let data = r.f32s(fs.elements())?;
            fr.push(Frame::new(fs, data).map_err(|e| DecodeError::Invalid {
                pos,
                msg: e.to_string(),
            })?);
        }
        latents.push(LatentState::new(step, fr).expect("uniform frame shape"));
    }
    let plen = Bitmap::packed_len(fs.height, fs.width);
    let mut bitmaps = Vec::with_capacity(2 * frames);
    for _ in 0..2 * frames {
        let pos = r.pos();
        let raw = r.take(plen)?.to_vec();
        bitmaps.push(Bitmap::from_packed(fs.height, fs.width, raw).map_err(|e| {
            DecodeError::Invalid {
                pos,
                msg: e.to_string(),
            }
        })?);
    }
    let background = bitmaps.split_off(frames);
    let masks = MaskSet::new(bitmaps, background).expect("uniform mask shape");
    r.expect_crc(0)?;
    if r.remaining() != 0 {
        return Err(r.invalid("trailing bytes"));
    }
    Ok((latents, masks))
}

pub fn write_latents(
    path: impl AsRef<Path>,
    latents: &[LatentState],
    masks: &MaskSet,
) -> std::io::Result<()> {
    std::fs::write(path, latents_to_bytes(latents, masks))
}

pub fn read_latents(path: impl AsRef<Path>) -> Result<(Vec<LatentState>, MaskSet), SnapshotError> {
    Ok(latents_from_bytes(&std::fs::read(path)?)?)
}

//! Mask-based combination of an object-source and a background-source latent.

use thiserror::Error;

use crate::latent::{Frame, LatentState, MaskSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StitchError {
    #[error("object latent is step {object}, background latent is step {background}")]
    StepMismatch { object: u32, background: u32 },
    #[error("latent or mask shapes disagree")]
    ShapeMismatch,
}

pub struct StitchInput<'a> {
    pub object_latent: &'a LatentState,
    pub object_masks: &'a MaskSet,
    pub background_latent: &'a LatentState,
    pub background_masks: &'a MaskSet,
}

/// Which source a pixel is copied from, given the object-source's object
/// bit and the background-source's object bit.
pub fn takes_object(object_bit: bool, stale_object_bit: bool) -> bool {
    object_bit || stale_object_bit
}

/// Per pixel: the object latent where either source marks an object, the
/// background latent everywhere else. No blending.
pub fn stitch(input: &StitchInput<'_>) -> Result<LatentState, StitchError> {
    let (obj, bg) = (input.object_latent, input.background_latent);
    if obj.step() != bg.step() {
        return Err(StitchError::StepMismatch {
            object: obj.step().get(),
            background: bg.step().get(),
        });
    }
    let shape = obj.shape();
    if bg.shape() != shape
        || !input.object_masks.matches(shape)
        || !input.background_masks.matches(shape)
    {
        return Err(StitchError::ShapeMismatch);
    }
    let fs = shape.frame;
    let c = fs.channels;
    let frames = obj
        .frames()
        .iter()
        .zip(bg.frames())
        .enumerate()
        .map(|(j, (fo, fb))| {
            let own = &input.object_masks.object()[j];
            let stale = &input.background_masks.object()[j];
            let mut data = fb.data().to_vec();
            for row in 0..fs.height {
                for col in 0..fs.width {
                    if takes_object(own.get(row, col), stale.get(row, col)) {
                        let at = (row * fs.width + col) * c;
                        data[at..at + c].copy_from_slice(fo.pixel(row, col));
                    }
                }
            }
            Frame::new(fs, data).expect("pixels copied from finite frames")
        })
        .collect();
    Ok(LatentState::new(obj.step(), frames).expect("frames share the source shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{Bitmap, FrameShape, LatentShape, StepId};
    use rand::{Rng, SeedableRng};

    fn latent(step: u32, frames: usize, fs: FrameShape, seed: u64) -> LatentState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..frames)
            .map(|_| {
                Frame::new(
                    fs,
                    (0..fs.elements())
                        .map(|_| rng.random_range(-2.0..2.0))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        LatentState::new(StepId::new(step).unwrap(), frames).unwrap()
    }

    fn masks(
        frames: usize,
        h: usize,
        w: usize,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> MaskSet {
        MaskSet::from_object(
            (0..frames)
                .map(|j| Bitmap::from_fn(h, w, |r, c| f(j, r, c)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_masks_give_background() {
        let fs = FrameShape::new(4, 4, 2).unwrap();
        let (o, b) = (latent(10, 3, fs, 1), latent(10, 3, fs, 2));
        let none = masks(3, 4, 4, |_, _, _| false);
        let out = stitch(&StitchInput {
            object_latent: &o,
            object_masks: &none,
            background_latent: &b,
            background_masks: &none,
        })
        .unwrap();
        assert!(out.bit_eq(&b));
    }

    #[test]
    fn full_object_mask_gives_object() {
        let fs = FrameShape::new(4, 4, 2).unwrap();
        let (o, b) = (latent(10, 3, fs, 1), latent(10, 3, fs, 2));
        let all = masks(3, 4, 4, |_, _, _| true);
        let none = masks(3, 4, 4, |_, _, _| false);
        let out = stitch(&StitchInput {
            object_latent: &o,
            object_masks: &all,
            background_latent: &b,
            background_masks: &none,
        })
        .unwrap();
        assert!(out.bit_eq(&o));
    }

    #[test]
    fn hand_drawn_masks() {
        // Object in the top-left 2x2, stale object in the bottom-right 2x2.
        let fs = FrameShape::new(4, 4, 1).unwrap();
        let o = LatentState::new(
            StepId::new(5).unwrap(),
            vec![Frame::filled(fs, 1.0).unwrap()],
        )
        .unwrap();
        let b = LatentState::new(
            StepId::new(5).unwrap(),
            vec![Frame::filled(fs, 2.0).unwrap()],
        )
        .unwrap();
        let om = masks(1, 4, 4, |_, r, c| r < 2 && c < 2);
        let bm = masks(1, 4, 4, |_, r, c| r >= 2 && c >= 2);
        let out = stitch(&StitchInput {
            object_latent: &o,
            object_masks: &om,
            background_latent: &b,
            background_masks: &bm,
        })
        .unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            2.0, 2.0, 1.0, 1.0,
            2.0, 2.0, 1.0, 1.0,
        ];
        assert_eq!(out.frames()[0].data(), &expected);
    }

    #[test]
    fn mismatches_are_errors() {
        let fs = FrameShape::new(4, 4, 1).unwrap();
        let m = masks(2, 4, 4, |_, _, _| false);
        let (a, b) = (latent(5, 2, fs, 1), latent(10, 2, fs, 2));
        let input = StitchInput {
            object_latent: &a,
            object_masks: &m,
            background_latent: &b,
            background_masks: &m,
        };
        assert!(matches!(
            stitch(&input),
            Err(StitchError::StepMismatch { .. })
        ));
        let c = latent(5, 3, fs, 3);
        let input = StitchInput {
            object_latent: &a,
            object_masks: &m,
            background_latent: &c,
            background_masks: &m,
        };
        assert_eq!(stitch(&input).unwrap_err(), StitchError::ShapeMismatch);
        let m3 = MaskSet::all_background(LatentShape {
            frames: 3,
            frame: fs,
        });
        let input = StitchInput {
            object_latent: &a,
            object_masks: &m3,
            background_latent: &a,
            background_masks: &m,
        };
        assert_eq!(stitch(&input).unwrap_err(), StitchError::ShapeMismatch);
    }
}

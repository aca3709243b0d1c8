//! Synthetic latents with controlled intra-step redundancy and near-linear
//! inter-step differentials.
//!
//! For cached step `s`, with frame-0 field `f0_s`, per-position
//! differential fields `D^m` shared by all steps, and scale `α_s`:
//!
//! ```text
//! key frame m       = f0_s + α_s · D^m + σ · rms(D) · noise
//! redundant frame j = copy of the nearest key frame before j
//! ```
//!
//! Key positions are nested across steps: a step with less redundancy keeps
//! every key position of the steps before it plus some more.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::latent::{Bitmap, Frame, FrameShape, LatentShape, LatentState, MaskSet, StepId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid latent spec: {0}")]
pub struct LatentSpecError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Fraction of frames 1.. that copy an earlier key frame, per cached step.
    pub redundancy_by_step: [f64; 5],
    /// Differential scale per cached step.
    pub alpha_schedule: [f64; 5],
    /// Differential noise relative to the differential's RMS.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self {
            frames: defaults::LATENT_FRAMES,
            height: defaults::LATENT_HEIGHT,
            width: defaults::LATENT_WIDTH,
            channels: defaults::LATENT_CHANNELS,
            redundancy_by_step: defaults::REDUNDANCY_BY_STEP,
            alpha_schedule: defaults::ALPHA_SCHEDULE,
            noise_sigma: defaults::DIFF_NOISE_SIGMA,
            seed: 0,
        }
    }
}

impl LatentSpec {
    pub fn validate(&self) -> Result<(), LatentSpecError> {
        let err = |m: String| Err(LatentSpecError(m));
        if self.frames == 0 || self.frames > usize::from(u16::MAX) + 1 {
            return err(format!("frame count {} out of range", self.frames));
        }
        if FrameShape::new(self.height, self.width, self.channels).is_err() {
            return err("frame dimensions must be nonzero".into());
        }
        if self
            .redundancy_by_step
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return err("redundancy must lie in [0, 1]".into());
        }
        if self.alpha_schedule.iter().any(|a| !a.is_finite()) {
            return err("alpha schedule must be finite".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return err("noise_sigma must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn frame_shape(&self) -> FrameShape {
        FrameShape::new(self.height, self.width, self.channels).expect("validated")
    }

    pub fn shape(&self) -> LatentShape {
        LatentShape {
            frames: self.frames,
            frame: self.frame_shape(),
        }
    }

    /// Redundant frames of cached step `i` (0 for step 5).
    pub fn redundant_frames(&self, i: usize) -> usize {
        (self.redundancy_by_step[i] * (self.frames - 1) as f64).round() as usize
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn rms(v: &[f32]) -> f64 {
    (v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Latents of one prompt at the five cached steps, plus its masks.
/// Deterministic in `(prompt_seed, spec)`.
pub fn synth_latents(
    prompt_seed: u64,
    spec: &LatentSpec,
) -> Result<(Vec<LatentState>, MaskSet), LatentSpecError> {
    spec.validate()?;
    let fs = spec.frame_shape();
    let n = fs.elements();
    let f = spec.frames;
    let mut rng =
        ChaCha8Rng::seed_from_u64(prompt_seed ^ spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));

    let mut positions: Vec<usize> = (1..f).collect();
    positions.shuffle(&mut rng);
    // Differentials for every position that is a key frame in some step.
    let max_keys = (0..5)
        .map(|i| f - 1 - spec.redundant_frames(i))
        .max()
        .unwrap_or(0);
    let diffs: Vec<Vec<f32>> = (0..max_keys).map(|_| gaussian(&mut rng, n)).collect();
    let base0 = gaussian(&mut rng, n);

    let mut latents = Vec::with_capacity(5);
    for (i, step) in StepId::cached().into_iter().enumerate() {
        let alpha = spec.alpha_schedule[i] as f32;
        let drift = gaussian(&mut rng, n);
        let first: Vec<f32> = base0.iter().zip(&drift).map(|(b, d)| b + 0.1 * d).collect();
        let n_keys = f - 1 - spec.redundant_frames(i);
        let mut is_key = vec![None; f];
        for (m, &p) in positions[..n_keys].iter().enumerate() {
            is_key[p] = Some(m);
        }
        let mut frames: Vec<Frame> = Vec::with_capacity(f);
        frames.push(Frame::new(fs, first.clone()).expect("finite"));
        let mut last_key = 0;
        for (j, key) in is_key.iter().enumerate().skip(1) {
            match key {
                Some(m) => {
                    let d = &diffs[*m];
                    let scale = (spec.noise_sigma * rms(d)) as f32;
                    let data = first
                        .iter()
                        .zip(d)
                        .map(|(x, dv)| {
                            let e: f32 = if scale > 0.0 {
                                rng.sample(StandardNormal)
                            } else {
                                0.0
                            };
                            x + alpha * dv + scale * e
                        })
                        .collect();
                    frames.push(Frame::new(fs, data).expect("finite"));
                    last_key = j;
                }
                None => frames.push(frames[last_key].clone()),
            }
        }
        latents.push(LatentState::new(step, frames).expect("uniform shape"));
    }

    let rh = rng.random_range(fs.height.div_ceil(4)..=fs.height.div_ceil(2));
    let rw = rng.random_range(fs.width.div_ceil(4)..=fs.width.div_ceil(2));
    let top = rng.random_range(0..=fs.height - rh);
    let left = rng.random_range(0..=fs.width - rw);
    let rect = Bitmap::from_fn(fs.height, fs.width, |r, c| {
        (top..top + rh).contains(&r) && (left..left + rw).contains(&c)
    });
    let masks = MaskSet::from_object(vec![rect; f]).expect("uniform mask shape");
    Ok((latents, masks))
}

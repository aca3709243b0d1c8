use std::collections::BTreeMap;

use crate::latent::{Frame, LatentShape, LatentState, MaskSet, PromptId, StepId};

use super::alpha::{solve_alpha, Diff, DiffSet};
use super::keyframe::{match_score, IntraCompressed, KeyFrameMap};
use super::CodecError;

/// A candidate base must beat the current best mean similarity by more than
/// this to be chosen; otherwise the earlier step wins.
pub const BASE_TIE_EPSILON: f64 = 1e-9;

/// Per-step data that is freed when that step is evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// `None` for the base step, whose first frame lives in the shared section.
    pub(crate) first_frame: Option<Frame>,
    pub(crate) map: KeyFrameMap,
    /// One scalar per common key frame; empty for the base step.
    pub(crate) alphas: Vec<f32>,
    /// Key frames stored verbatim, ascending by index.
    pub(crate) extras: Vec<(u32, Frame)>,
}

impl StepRecord {
    pub fn map(&self) -> &KeyFrameMap {
        &self.map
    }

    pub fn alphas(&self) -> &[f32] {
        &self.alphas
    }

    pub fn extra_frames(&self) -> &[(u32, Frame)] {
        &self.extras
    }

    fn extra(&self, index: u32) -> Option<&Frame> {
        self.extras
            .binary_search_by_key(&index, |(i, _)| *i)
            .ok()
            .map(|p| &self.extras[p].1)
    }
}

/// Compressed latents of one prompt across its cached steps.
///
/// The shared section (base first frame, base key frames at the common
/// indices, masks) stays alive as long as any step does; each step's
/// [`StepRecord`] can be dropped independently.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedEntry {
    pub(crate) prompt: PromptId,
    pub(crate) shape: LatentShape,
    pub(crate) base_step: StepId,
    /// Common key-frame indices other than 0, ascending.
    pub(crate) common: Vec<u32>,
    pub(crate) base_first: Frame,
    /// Base-step key frames, parallel to `common`.
    pub(crate) base_keyframes: Vec<Frame>,
    pub(crate) masks: MaskSet,
    pub(crate) steps: BTreeMap<StepId, StepRecord>,
}

impl CompressedEntry {
    pub fn prompt(&self) -> PromptId {
        self.prompt
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn base_step(&self) -> StepId {
        self.base_step
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    /// Key-frame indices common to every compressed step, including 0.
    pub fn common_keyframes(&self) -> Vec<u32> {
        std::iter::once(0)
            .chain(self.common.iter().copied())
            .collect()
    }

    /// Cached steps still present, ascending.
    pub fn steps(&self) -> impl Iterator<Item = StepId> + '_ {
        self.steps.keys().copied()
    }

    pub fn has_step(&self, step: StepId) -> bool {
        self.steps.contains_key(&step)
    }

    pub fn record(&self, step: StepId) -> Option<&StepRecord> {
        self.steps.get(&step)
    }

    /// First frame of `step`, exactly as it was before compression.
    pub fn first_frame(&self, step: StepId) -> Option<&Frame> {
        let rec = self.steps.get(&step)?;
        Some(rec.first_frame.as_ref().unwrap_or(&self.base_first))
    }

    /// `α` for key frame `index` of `step`; `1.0` on the base step.
    pub fn alpha(&self, step: StepId, index: u32) -> Option<f32> {
        let pos = self.common.binary_search(&index).ok()?;
        let rec = self.steps.get(&step)?;
        if step == self.base_step {
            Some(1.0)
        } else {
            rec.alphas.get(pos).copied()
        }
    }

    /// Base differentials at the common indices.
    pub fn base_diffs(&self) -> DiffSet {
        DiffSet::of(
            &self.base_first,
            self.common.iter().copied().zip(&self.base_keyframes),
        )
        .expect("shared frames have one shape")
    }

    /// Drops `step`'s private record, returning it.
    pub fn remove_step(&mut self, step: StepId) -> Option<StepRecord> {
        self.steps.remove(&step)
    }

    /// Keeps only the listed steps.
    pub fn retain_steps(&mut self, keep: &[StepId]) {
        self.steps.retain(|s, _| keep.contains(s));
    }

    /// Bytes of one uncompressed step latent.
    pub fn uncompressed_step_bytes(&self) -> usize {
        self.shape.bytes()
    }

    /// Reconstructs key frame `index` of `step`.
    pub(crate) fn reconstruct_key(&self, step: StepId, index: u32) -> Result<Frame, CodecError> {
        let rec = self
            .steps
            .get(&step)
            .ok_or(CodecError::StepNotCached(step))?;
        let first = rec.first_frame.as_ref().unwrap_or(&self.base_first);
        if index == 0 {
            return Ok(first.clone());
        }
        if let Some(f) = rec.extra(index) {
            return Ok(f.clone());
        }
        let pos = self.common.binary_search(&index).map_err(|_| {
            CodecError::InvalidMap(format!("key frame {index} of step {step} has no source"))
        })?;
        let base_key = &self.base_keyframes[pos];
        if step == self.base_step {
            return Ok(base_key.clone());
        }
        let a = rec.alphas[pos];
        let data = first
            .data()
            .iter()
            .zip(base_key.data().iter().zip(self.base_first.data()))
            .map(|(f, (bk, bf))| f + a * (bk - bf))
            .collect();
        Ok(Frame::new(first.shape(), data)?)
    }

    /// Mean per-frame similarity of every stored step against the intra-step
    /// originals. Non-key frames copy their key frame in both, so each key
    /// frame is weighted by the number of frames it represents.
    fn fidelity(&self, originals: &[IntraCompressed]) -> Result<f64, CodecError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for orig in originals {
            for (k, frame) in orig.keyframes() {
                let recon = self.reconstruct_key(orig.step(), *k)?;
                let weight = orig.map().multiplicity(*k as usize);
                total += weight as f64 * match_score(&recon, frame);
                count += weight;
            }
        }
        Ok(total / count as f64)
    }
}

fn validate(
    steps: &[IntraCompressed],
    masks: &MaskSet,
) -> Result<Vec<IntraCompressed>, CodecError> {
    let first = steps.first().ok_or(CodecError::NoSteps)?;
    let shape = first.shape();
    let mut sorted = steps.to_vec();
    sorted.sort_by_key(|s| s.step());
    for pair in sorted.windows(2) {
        if pair[0].step() == pair[1].step() {
            return Err(CodecError::DuplicateStep(pair[0].step()));
        }
    }
    if sorted.iter().any(|s| s.shape() != shape) {
        return Err(CodecError::ShapeMismatch);
    }
    if !masks.matches(shape) {
        return Err(CodecError::MaskMismatch);
    }
    Ok(sorted)
}

fn common_indices(steps: &[IntraCompressed]) -> Vec<u32> {
    let mut common: Vec<u32> = steps[0]
        .keyframes()
        .iter()
        .map(|(i, _)| *i)
        .filter(|&i| i != 0)
        .collect();
    for s in &steps[1..] {
        common.retain(|&i| s.keyframe(i).is_some());
    }
    common
}

fn build(
    prompt: PromptId,
    steps: &[IntraCompressed],
    base: usize,
    common: &[u32],
    masks: &MaskSet,
) -> Result<CompressedEntry, CodecError> {
    let base_c = &steps[base];
    let base_first = base_c.first_frame().clone();
    let base_keyframes: Vec<Frame> = common
        .iter()
        .map(|&m| {
            base_c
                .keyframe(m)
                .expect("common index is a key frame")
                .clone()
        })
        .collect();
    let base_diffs: Vec<Diff> = base_keyframes
        .iter()
        .map(|k| Diff::between(k, &base_first))
        .collect::<Result<_, _>>()?;

    let mut records = BTreeMap::new();
    for (si, s) in steps.iter().enumerate() {
        let mut extras: Vec<(u32, Frame)> = s
            .keyframes()
            .iter()
            .filter(|(i, _)| *i != 0 && common.binary_search(i).is_err())
            .cloned()
            .collect();
        let record = if si == base {
            StepRecord {
                first_frame: None,
                map: s.map().clone(),
                alphas: Vec::new(),
                extras,
            }
        } else {
            let first = s.first_frame();
            let mut alphas = Vec::with_capacity(common.len());
            for (&m, base_diff) in common.iter().zip(&base_diffs) {
                let key = s.keyframe(m).expect("common index is a key frame");
                let diff = Diff::between(key, first)?;
                match solve_alpha(diff.values(), base_diff.values()) {
                    Ok(a) => alphas.push(a),
                    Err(CodecError::DegenerateBase) => {
                        alphas.push(0.0);
                        if !diff.is_zero() {
                            extras.push((m, key.clone()));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            extras.sort_by_key(|(i, _)| *i);
            StepRecord {
                first_frame: Some(first.clone()),
                map: s.map().clone(),
                alphas,
                extras,
            }
        };
        records.insert(s.step(), record);
    }

    Ok(CompressedEntry {
        prompt,
        shape: base_c.shape(),
        base_step: base_c.step(),
        common: common.to_vec(),
        base_first,
        base_keyframes,
        masks: masks.clone(),
        steps: records,
    })
}

/// Inter-step compression with every stored step tried as the base; the base
/// whose decompression is most similar to the intra-step originals wins,
/// ties going to the earliest step.
pub fn inter_compress(
    prompt: PromptId,
    steps: &[IntraCompressed],
    masks: &MaskSet,
) -> Result<CompressedEntry, CodecError> {
    let steps = validate(steps, masks)?;
    let common = common_indices(&steps);
    let mut best: Option<(CompressedEntry, f64)> = None;
    for base in 0..steps.len() {
        let entry = build(prompt, &steps, base, &common, masks)?;
        let score = entry.fidelity(&steps)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| score > b + BASE_TIE_EPSILON)
        {
            best = Some((entry, score));
        }
    }
    Ok(best.expect("at least one step").0)
}

/// Inter-step compression with a fixed base step.
pub fn inter_compress_with_base(
    prompt: PromptId,
    steps: &[IntraCompressed],
    masks: &MaskSet,
    base: StepId,
) -> Result<CompressedEntry, CodecError> {
    let steps = validate(steps, masks)?;
    let common = common_indices(&steps);
    let pos = steps
        .iter()
        .position(|s| s.step() == base)
        .ok_or(CodecError::StepNotCached(base))?;
    build(prompt, &steps, pos, &common, masks)
}

/// Rebuilds the full latent of `step`. First frames and extra frames are
/// bit-exact; common key frames of non-base steps are approximations.
pub fn decompress_step(entry: &CompressedEntry, step: StepId) -> Result<LatentState, CodecError> {
    let rec = entry
        .steps
        .get(&step)
        .ok_or(CodecError::StepNotCached(step))?;
    let mut keys: BTreeMap<usize, Frame> = BTreeMap::new();
    for k in rec.map.key_frames() {
        keys.insert(k, entry.reconstruct_key(step, k as u32)?);
    }
    let frames = (0..rec.map.len())
        .map(|j| keys[&rec.map.target(j)].clone())
        .collect();
    Ok(LatentState::new(step, frames)?)
}

/// Exact serialized length of `entry`, in bytes.
pub fn compressed_size(entry: &CompressedEntry) -> usize {
    entry.encoded_len()
}

//! Capacity-bounded cache of compressed step latents.
//!
//! Each insertion stores one [`CompressedEntry`] (a *group*) holding one or
//! more steps of a prompt. A step can be evicted on its own; the group's
//! shared section is freed with the last of its steps. A prompt may own
//! several groups when it is topped up after a partial hit.

mod policy;
mod snapshot;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{decompress_step, CodecError, CompressedEntry};
use crate::latent::{LatentState, MaskSet, PromptId, StepId};

pub use policy::{lcbfu_priority, lrbu_priority, Policy, StepEntry};
pub use snapshot::{load_snapshot, save_snapshot, Snapshot, SnapshotError, SNAPSHOT_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("entry of {needed} bytes exceeds the {limit}-byte capacity")]
    OversizedEntry { needed: u64, limit: u64 },
    #[error("store is empty")]
    Empty,
    #[error("no steps given")]
    NoSteps,
    #[error("step {step} of prompt {prompt} is not in the entry")]
    MissingStep { prompt: PromptId, step: StepId },
    #[error("step {step} of prompt {prompt} is already cached")]
    AlreadyCached { prompt: PromptId, step: StepId },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// One entry removed by eviction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eviction {
    pub entry: StepEntry,
    /// The prompt has no cached step left and should leave the index.
    pub prompt_emptied: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    meta: StepEntry,
    group: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheStore {
    limit: u64,
    used: u64,
    policy: Policy,
    groups: BTreeMap<u64, CompressedEntry>,
    slots: BTreeMap<(PromptId, StepId), Slot>,
    next_group: u64,
    next_seq: u64,
}

impl CacheStore {
    pub fn new(capacity_bytes: u64, policy: Policy) -> Self {
        Self {
            limit: capacity_bytes,
            used: 0,
            policy,
            groups: BTreeMap::new(),
            slots: BTreeMap::new(),
            next_group: 0,
            next_seq: 0,
        }
    }

    pub fn capacity_limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Number of cached steps across all prompts.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains_prompt(&self, prompt: PromptId) -> bool {
        self.prompt_slots(prompt).next().is_some()
    }

    /// Cached steps of `prompt`, ascending.
    pub fn cached_steps(&self, prompt: PromptId) -> Vec<StepId> {
        self.prompt_slots(prompt).map(|((_, s), _)| *s).collect()
    }

    /// Masks of `prompt`, if any of its steps is cached.
    pub fn masks(&self, prompt: PromptId) -> Option<&MaskSet> {
        let (_, slot) = self.prompt_slots(prompt).next()?;
        Some(self.groups[&slot.group].masks())
    }

    /// Bookkeeping for one cached step, with its current capacity attribution.
    pub fn entry(&self, prompt: PromptId, step: StepId) -> Option<StepEntry> {
        self.slots.get(&(prompt, step)).map(|s| self.attributed(s))
    }

    /// All cached steps, ordered by prompt then step.
    pub fn entries(&self) -> impl Iterator<Item = StepEntry> + '_ {
        self.slots.values().map(|s| self.attributed(s))
    }

    /// Shared and private bytes of the group holding `prompt`'s `step`.
    pub fn group_of(&self, prompt: PromptId, step: StepId) -> Option<&CompressedEntry> {
        self.slots
            .get(&(prompt, step))
            .map(|s| &self.groups[&s.group])
    }

    fn prompt_slots(&self, prompt: PromptId) -> impl Iterator<Item = (&(PromptId, StepId), &Slot)> {
        let lo = (prompt, StepId::FIRST);
        let hi = (prompt, StepId::LAST);
        self.slots.range(lo..=hi)
    }

    fn attributed(&self, slot: &Slot) -> StepEntry {
        let group = &self.groups[&slot.group];
        let refs = group.steps().count() as u64;
        let private = group.step_bytes(slot.meta.step) as u64;
        StepEntry {
            capacity: private + group.shared_bytes() as u64 / refs.max(1),
            ..slot.meta
        }
    }

    /// Stores `steps` of `entry` under its prompt, evicting as needed.
    ///
    /// Steps of `entry` not listed are dropped before sizing. If the trimmed
    /// entry alone exceeds the capacity limit nothing is evicted.
    pub fn insert_steps(
        &mut self,
        mut entry: CompressedEntry,
        steps: &[StepId],
        now: u64,
    ) -> Result<Vec<Eviction>, StoreError> {
        let prompt = entry.prompt();
        if steps.is_empty() {
            return Err(StoreError::NoSteps);
        }
        for &step in steps {
            if !entry.has_step(step) {
                return Err(StoreError::MissingStep { prompt, step });
            }
            if self.slots.contains_key(&(prompt, step)) {
                return Err(StoreError::AlreadyCached { prompt, step });
            }
        }
        entry.retain_steps(steps);
        let needed = entry.encoded_len() as u64;
        if needed > self.limit {
            return Err(StoreError::OversizedEntry {
                needed,
                limit: self.limit,
            });
        }
        let mut evicted = Vec::new();
        while self.used + needed > self.limit {
            evicted.push(self.evict_one(now)?);
        }
        let group = self.next_group;
        self.next_group += 1;
        for step in entry.steps().collect::<Vec<_>>() {
            let meta = StepEntry {
                prompt,
                step,
                f: 0,
                last_access: now,
                inserted_at: now,
                capacity: 0,
                seq: self.next_seq,
            };
            self.next_seq += 1;
            self.slots.insert((prompt, step), Slot { meta, group });
        }
        self.groups.insert(group, entry);
        self.used += needed;
        self.debug_check();
        Ok(evicted)
    }

    /// Serves the largest cached step of `prompt` not above `desired`.
    ///
    /// Only the served entry's access count and time are updated. `None`
    /// when no such step is cached.
    pub fn get_step(
        &mut self,
        prompt: PromptId,
        desired: StepId,
        now: u64,
    ) -> Result<Option<(LatentState, StepId)>, StoreError> {
        let Some(step) = self.best_step(prompt, desired) else {
            return Ok(None);
        };
        let slot = self
            .slots
            .get_mut(&(prompt, step))
            .expect("step found above");
        slot.meta.f += 1;
        slot.meta.last_access = slot.meta.last_access.max(now);
        let latent = decompress_step(&self.groups[&slot.group], step)?;
        Ok(Some((latent, step)))
    }

    /// Step [`get_step`](Self::get_step) would serve, without touching
    /// bookkeeping.
    pub fn best_step(&self, prompt: PromptId, desired: StepId) -> Option<StepId> {
        self.prompt_slots(prompt)
            .map(|((_, s), _)| *s)
            .take_while(|&s| s <= desired)
            .last()
    }

    /// Removes the lowest-priority entry under the active policy.
    pub fn evict_one(&mut self, now: u64) -> Result<Eviction, StoreError> {
        let victim = self
            .slots
            .values()
            .map(|s| self.attributed(s))
            .min_by(|a, b| {
                let ka = policy::eviction_key(self.policy, a, now);
                let kb = policy::eviction_key(self.policy, b, now);
                ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
            })
            .ok_or(StoreError::Empty)?;
        Ok(self.remove(victim))
    }

    /// Removes a specific cached step, as if evicted.
    pub fn evict_step(&mut self, prompt: PromptId, step: StepId) -> Option<Eviction> {
        let slot = self.slots.get(&(prompt, step))?;
        let e = self.attributed(slot);
        Some(self.remove(e))
    }

    fn remove(&mut self, victim: StepEntry) -> Eviction {
        let slot = self
            .slots
            .remove(&(victim.prompt, victim.step))
            .expect("victim is cached");
        let group = self.groups.get_mut(&slot.group).expect("slot group exists");
        let before = group.encoded_len() as u64;
        group.remove_step(victim.step);
        if group.steps().next().is_none() {
            self.groups.remove(&slot.group);
            self.used -= before;
        } else {
            self.used -= before - group.encoded_len() as u64;
        }
        self.debug_check();
        Eviction {
            entry: victim,
            prompt_emptied: !self.contains_prompt(victim.prompt),
        }
    }

    /// Byte count recomputed from the live groups.
    pub fn recompute_used(&self) -> u64 {
        self.groups.values().map(|g| g.encoded_len() as u64).sum()
    }

    fn debug_check(&self) {
        debug_assert_eq!(self.used, self.recompute_used());
        debug_assert!(self.used <= self.limit);
    }
}

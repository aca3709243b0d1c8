use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::latent::{PromptId, StepId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Fifo,
    Lru,
    Lcbfu,
    Lrbu,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Fifo, Policy::Lru, Policy::Lcbfu, Policy::Lrbu];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Fifo => "fifo",
            Policy::Lru => "lru",
            Policy::Lcbfu => "lcbfu",
            Policy::Lrbu => "lrbu",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy {s:?}; expected fifo, lru, lcbfu or lrbu"))
    }
}

/// Bookkeeping for one cached step of one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEntry {
    pub prompt: PromptId,
    pub step: StepId,
    /// Requests served from this entry.
    pub f: u64,
    pub last_access: u64,
    pub inserted_at: u64,
    /// Attributed bytes: private bytes plus this entry's share of the
    /// prompt's shared section.
    pub capacity: u64,
    /// Insertion order; breaks priority ties.
    pub seq: u64,
}

/// `f × step`, with `f` counted as accesses + 1.
pub fn lcbfu_priority(e: &StepEntry) -> f64 {
    (e.f + 1) as f64 * f64::from(e.step.get())
}

/// `f × step / (capacity × duration)`, `duration = max(now − last_access, 1)`.
pub fn lrbu_priority(e: &StepEntry, now: u64) -> f64 {
    let duration = now.saturating_sub(e.last_access).max(1);
    lcbfu_priority(e) / (e.capacity.max(1) as f64 * duration as f64)
}

/// Eviction key: the entry with the smallest key goes first.
pub(crate) fn eviction_key(policy: Policy, e: &StepEntry, now: u64) -> (f64, u64) {
    let p = match policy {
        Policy::Fifo => e.seq as f64,
        Policy::Lru => e.last_access as f64,
        Policy::Lcbfu => lcbfu_priority(e),
        Policy::Lrbu => lrbu_priority(e, now),
    };
    (p, e.seq)
}

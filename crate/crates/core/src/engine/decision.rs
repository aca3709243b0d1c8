use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::latent::StepId;

use super::EngineError;

/// Outcome of the hit rule, before sources are attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Miss,
    Whole { score: f64 },
    Decoupled { score: f64 },
}

impl Verdict {
    pub fn score(self) -> Option<f64> {
        match self {
            Verdict::Miss => None,
            Verdict::Whole { score } | Verdict::Decoupled { score } => Some(score),
        }
    }
}

/// Picks between the whole-prompt match and the weaker of the object and
/// background matches. Equal scores resolve to the whole match.
pub fn decide(sim_whole: f64, sim_object: f64, sim_background: f64, threshold: f64) -> Verdict {
    let parts = sim_object.min(sim_background);
    if parts > sim_whole && parts >= threshold {
        Verdict::Decoupled { score: parts }
    } else if sim_whole >= threshold {
        Verdict::Whole { score: sim_whole }
    } else {
        Verdict::Miss
    }
}

/// Score-to-step table: `edges[i]` is the lowest score mapped to the i-th
/// cached step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepBins {
    edges: Vec<f64>,
}

impl Default for StepBins {
    fn default() -> Self {
        Self {
            edges: defaults::STEP_BIN_EDGES.to_vec(),
        }
    }
}

impl StepBins {
    pub fn new(edges: Vec<f64>) -> Result<Self, EngineError> {
        let bins = Self { edges };
        bins.validate()?;
        Ok(bins)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.edges.len() != defaults::CACHED_STEPS.len() {
            return Err(EngineError::Config(format!(
                "{} bin edges given, {} needed",
                self.edges.len(),
                defaults::CACHED_STEPS.len()
            )));
        }
        if self.edges.iter().any(|e| !e.is_finite()) || self.edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(EngineError::Config(
                "bin edges must be finite and strictly ascending".into(),
            ));
        }
        Ok(())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn step(&self, score: f64) -> Result<StepId, EngineError> {
        let bin = self.edges.iter().take_while(|&&e| score >= e).count();
        if bin == 0 {
            return Err(EngineError::BelowThreshold(score));
        }
        Ok(StepId::cached()[bin - 1])
    }
}

/// Maps a hit score to the step it may skip to.
pub fn similarity_to_step(score: f64, bins: &StepBins) -> Result<StepId, EngineError> {
    bins.step(score)
}

//! Request pipeline: lookup, hit decision, step selection, fetch or stitch,
//! simulated generation, cache update.

mod decision;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{inter_compress, intra_compress, CodecError};
use crate::defaults;
use crate::latent::{Embedding, EmbeddingKind, LatentState, MaskSet, PromptId, StepId};
use crate::stitcher::{stitch, StitchError, StitchInput};
use crate::store::{CacheStore, Policy, StoreError};
use crate::vindex::{IndexError, VectorIndex};

pub use decision::{decide, similarity_to_step, StepBins, Verdict};
pub use model::{report, CostReport, LatencyModel, Metrics, PricingModel, Window, SKIP_BUCKETS};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("score {0} is below the first step bin")]
    BelowThreshold(f64),
    #[error("no requests were processed")]
    NoRequests,
    #[error("latent source: {0}")]
    Source(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub hit_threshold: f64,
    pub compress_threshold: f64,
    pub bins: StepBins,
    pub latency: LatencyModel,
    pub pricing: PricingModel,
    pub capacity_bytes: u64,
    pub policy: Policy,
    /// Requests per rolling-throughput window.
    pub window: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            hit_threshold: defaults::HIT_THRESHOLD,
            compress_threshold: defaults::COMPRESS_THRESHOLD,
            bins: StepBins::default(),
            latency: LatencyModel::default(),
            pricing: PricingModel::default(),
            capacity_bytes: 1_000_000_000,
            policy: Policy::Lrbu,
            window: 1000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.hit_threshold.is_finite() && self.hit_threshold <= 1.0) {
            return Err(EngineError::Config(format!(
                "hit threshold {} must be at most 1",
                self.hit_threshold
            )));
        }
        if !(self.compress_threshold > 0.0 && self.compress_threshold <= 1.0) {
            return Err(EngineError::Config(format!(
                "compression threshold {} outside (0, 1]",
                self.compress_threshold
            )));
        }
        self.bins.validate()?;
        if self.hit_threshold < self.bins.edges()[0] {
            return Err(EngineError::Config(format!(
                "hit threshold {} is below the first bin edge {}",
                self.hit_threshold,
                self.bins.edges()[0]
            )));
        }
        if self.window == 0 {
            return Err(EngineError::Config("window must be at least 1".into()));
        }
        self.latency.validate()?;
        self.pricing.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub prompt: PromptId,
    pub arrival: u64,
    pub whole: Embedding,
    pub object: Embedding,
    pub background: Embedding,
    /// Seed of this prompt's latents in the latent source.
    pub latent_seed: u64,
}

/// Latents of one prompt at the requested steps, plus its masks.
#[derive(Debug, Clone)]
pub struct PromptLatents {
    pub steps: Vec<LatentState>,
    pub masks: MaskSet,
}

/// Supplies the latents a request would produce while generating.
pub trait LatentSource {
    fn latents(&self, req: &Request, steps: &[StepId]) -> Result<PromptLatents, EngineError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Miss,
    WholeHit {
        source: PromptId,
        score: f64,
    },
    DecoupledHit {
        object_source: PromptId,
        background_source: PromptId,
        score: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub prompt: PromptId,
    pub arrival: u64,
    pub decision: Decision,
    /// Step chosen from the score, before hole fallback.
    pub desired: Option<StepId>,
    pub skipped: u32,
    pub latency: f64,
    pub inserted: Vec<StepId>,
    pub evicted: usize,
    pub insert_refused: bool,
}

pub struct Engine {
    config: EngineConfig,
    store: CacheStore,
    index: VectorIndex,
    metrics: Metrics,
    clock: u64,
}

impl Engine {
    pub fn new(config: EngineConfig, embed_dim: usize) -> Result<Self, EngineError> {
        let store = CacheStore::new(config.capacity_bytes, config.policy);
        Self::with_state(config, store, VectorIndex::new(embed_dim))
    }

    /// Resumes from an existing store and index, e.g. a loaded snapshot.
    pub fn with_state(
        config: EngineConfig,
        store: CacheStore,
        index: VectorIndex,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let metrics = Metrics::new(config.window);
        Ok(Self {
            config,
            store,
            index,
            metrics,
            clock: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut CacheStore {
        &mut self.store
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn report(&self) -> Result<CostReport, EngineError> {
        report(
            &self.metrics,
            &self.config.latency,
            &self.config.pricing,
            self.config.capacity_bytes,
        )
    }

    /// Looks up the three tables and applies the hit rule.
    pub fn lookup(&self, req: &Request) -> Decision {
        let query = |kind, q: &Embedding| self.index.query_top1(kind, q);
        let (Some(w), Some(o), Some(b)) = (
            query(EmbeddingKind::Whole, &req.whole),
            query(EmbeddingKind::Object, &req.object),
            query(EmbeddingKind::Background, &req.background),
        ) else {
            return Decision::Miss;
        };
        match decide(w.score, o.score, b.score, self.config.hit_threshold) {
            Verdict::Miss => Decision::Miss,
            Verdict::Whole { score } => Decision::WholeHit {
                source: w.prompt,
                score,
            },
            Verdict::Decoupled { score } => Decision::DecoupledHit {
                object_source: o.prompt,
                background_source: b.prompt,
                score,
            },
        }
    }

    /// Largest step cached for both prompts and not above `desired`.
    fn shared_step(&self, a: PromptId, b: PromptId, desired: StepId) -> Option<StepId> {
        let theirs = self.store.cached_steps(b);
        self.store
            .cached_steps(a)
            .into_iter()
            .rfind(|s| *s <= desired && theirs.contains(s))
    }

    /// Fetches the latent a hit starts from; `None` when nothing usable
    /// is cached for the chosen sources.
    fn serve(
        &mut self,
        decision: Decision,
        desired: StepId,
        now: u64,
    ) -> Result<Option<LatentState>, EngineError> {
        match decision {
            Decision::Miss => Ok(None),
            Decision::WholeHit { source, .. } => {
                Ok(self.store.get_step(source, desired, now)?.map(|(l, _)| l))
            }
            Decision::DecoupledHit {
                object_source,
                background_source,
                ..
            } => {
                let Some(step) = self.shared_step(object_source, background_source, desired) else {
                    return Ok(None);
                };
                let (obj, _) = self
                    .store
                    .get_step(object_source, step, now)?
                    .expect("step is cached");
                let (bg, _) = self
                    .store
                    .get_step(background_source, step, now)?
                    .expect("step is cached");
                let input = StitchInput {
                    object_latent: &obj,
                    object_masks: self.store.masks(object_source).expect("prompt is cached"),
                    background_latent: &bg,
                    background_masks: self
                        .store
                        .masks(background_source)
                        .expect("prompt is cached"),
                };
                Ok(Some(stitch(&input)?))
            }
        }
    }

    pub fn process_request(
        &mut self,
        req: &Request,
        source: &dyn LatentSource,
    ) -> Result<RequestOutcome, EngineError> {
        let now = self.clock;
        self.clock += 1;
        let mut decision = self.lookup(req);
        let mut desired = None;
        let mut served = None;
        if let Some(score) = score_of(decision) {
            let step = self.config.bins.step(score)?;
            desired = Some(step);
            served = self.serve(decision, step, now)?.map(|l| l.step());
            if served.is_none() {
                decision = Decision::Miss;
            }
        }
        let skipped = served.map_or(0, StepId::get);
        let stitched = matches!(decision, Decision::DecoupledHit { .. });
        let latency = self.config.latency.latency(skipped, stitched);
        match decision {
            Decision::Miss => self.metrics.misses += 1,
            Decision::WholeHit { .. } => self.metrics.whole_hits += 1,
            Decision::DecoupledHit { .. } => self.metrics.decoupled_hits += 1,
        }
        self.metrics.record(skipped, latency, served.is_some());
        let mut outcome = RequestOutcome {
            prompt: req.prompt,
            arrival: req.arrival,
            decision,
            desired,
            skipped,
            latency,
            inserted: Vec::new(),
            evicted: 0,
            insert_refused: false,
        };
        self.update_after_generation(req, &mut outcome, source, now)?;
        Ok(outcome)
    }

    /// Caches the steps this request generated beyond the one it started
    /// from, and registers the prompt in the index.
    pub fn update_after_generation(
        &mut self,
        req: &Request,
        outcome: &mut RequestOutcome,
        source: &dyn LatentSource,
        now: u64,
    ) -> Result<(), EngineError> {
        let wanted: Vec<StepId> = match outcome.skipped {
            0 => StepId::cached().to_vec(),
            n => StepId::new(n)
                .expect("skips are valid steps")
                .cached_after(),
        };
        let have = self.store.cached_steps(req.prompt);
        let steps: Vec<StepId> = wanted.into_iter().filter(|s| !have.contains(s)).collect();
        if steps.is_empty() {
            return Ok(());
        }
        let latents = source.latents(req, &steps)?;
        let intra = latents
            .steps
            .iter()
            .map(|l| intra_compress(l, self.config.compress_threshold))
            .collect::<Result<Vec<_>, _>>()?;
        let entry = inter_compress(req.prompt, &intra, &latents.masks)?;
        let evictions = match self.store.insert_steps(entry, &steps, now) {
            Ok(ev) => ev,
            Err(StoreError::OversizedEntry { .. }) => {
                outcome.insert_refused = true;
                self.metrics.insert_refused += 1;
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        for ev in &evictions {
            if ev.prompt_emptied && self.index.contains(ev.entry.prompt) {
                self.index.remove(ev.entry.prompt)?;
            }
        }
        if !self.index.contains(req.prompt) {
            self.index
                .insert(&req.whole, &req.object, &req.background, req.prompt)?;
        }
        outcome.inserted = steps;
        outcome.evicted = evictions.len();
        self.metrics.insertions += outcome.inserted.len() as u64;
        self.metrics.evictions += evictions.len() as u64;
        Ok(())
    }
}

fn score_of(d: Decision) -> Option<f64> {
    match d {
        Decision::Miss => None,
        Decision::WholeHit { score, .. } | Decision::DecoupledHit { score, .. } => Some(score),
    }
}

//! Synthetic workloads: prompt embeddings, request traces, and latents.

mod embedding;
mod file;
mod latents;
mod trace;

use std::collections::BTreeMap;

pub use embedding::{fnv1a, synth_embedding, EmbeddingModel};
pub use file::{
    latents_from_bytes, latents_to_bytes, read_latents, write_latents, LATENT_FILE_VERSION,
};
pub use latents::{synth_latents, LatentSpec, LatentSpecError};
pub use trace::{
    gen_trace, Popularity, Trace, TraceError, TraceRecord, TraceSpec, TRACE_FORMAT, TRACE_VERSION,
};

use crate::codec::{compressed_size, inter_compress, intra_compress};
use crate::engine::{Engine, EngineError, LatentSource, PromptLatents, Request, RequestOutcome};
use crate::latent::{PromptId, StepId};

/// Latents generated on demand from each request's latent seed.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub spec: LatentSpec,
}

impl SyntheticSource {
    pub fn new(spec: LatentSpec) -> Result<Self, LatentSpecError> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

impl LatentSource for SyntheticSource {
    fn latents(&self, req: &Request, steps: &[StepId]) -> Result<PromptLatents, EngineError> {
        let (all, masks) = synth_latents(req.latent_seed, &self.spec)
            .map_err(|e| EngineError::Source(e.to_string()))?;
        let steps = all
            .into_iter()
            .filter(|l| steps.contains(&l.step()))
            .collect();
        Ok(PromptLatents { steps, masks })
    }
}

/// Compressed bytes of all five cached steps of one prompt.
pub fn entry_size(
    latent_seed: u64,
    spec: &LatentSpec,
    compress_threshold: f64,
) -> Result<usize, EngineError> {
    let (latents, masks) =
        synth_latents(latent_seed, spec).map_err(|e| EngineError::Source(e.to_string()))?;
    let intra = latents
        .iter()
        .map(|l| intra_compress(l, compress_threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let entry = inter_compress(PromptId(latent_seed), &intra, &masks)?;
    Ok(compressed_size(&entry))
}

/// Total compressed bytes of the distinct prompts in `trace`.
pub fn working_set(
    trace: &Trace,
    spec: &LatentSpec,
    compress_threshold: f64,
) -> Result<u64, EngineError> {
    let distinct: BTreeMap<PromptId, u64> = trace
        .records
        .iter()
        .map(|r| (r.prompt, r.latent_seed))
        .collect();
    distinct
        .values()
        .map(|&seed| entry_size(seed, spec, compress_threshold).map(|n| n as u64))
        .sum()
}

/// Replays `trace` through `engine`, handing each outcome to `on_outcome`.
pub fn run_trace(
    engine: &mut Engine,
    trace: &Trace,
    source: &dyn LatentSource,
    model: &EmbeddingModel,
    mut on_outcome: impl FnMut(&RequestOutcome),
) -> Result<(), EngineError> {
    for record in &trace.records {
        let out = engine.process_request(&record.to_request(model), source)?;
        on_outcome(&out);
    }
    Ok(())
}

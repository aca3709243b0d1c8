use serde::Serialize;

use latentcache::codec::{
    compressed_size, decompress_step, inter_compress, inter_compress_with_base, intra_compress,
    SizeBreakdown,
};
use latentcache::simgen::{read_latents, synth_latents, write_latents, LatentSpec};
use latentcache::{cosine_similarity, LatentShape, LatentState, PromptId, StepId};

use crate::args::CodecArgs;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct StepReport {
    step: u32,
    key_frames: usize,
    similarity: f64,
    /// Bytes freed if this step alone were evicted.
    private_bytes: usize,
}

#[derive(Debug, Serialize)]
struct CodecReport {
    shape: LatentShape,
    compress_threshold: f64,
    base_step: u32,
    common_key_frames: usize,
    uncompressed_bytes: usize,
    compressed_bytes: usize,
    ratio: f64,
    min_similarity: f64,
    steps: Vec<StepReport>,
    breakdown: SizeBreakdown,
}

fn synthetic_spec(a: &CodecArgs) -> Result<LatentSpec, CliError> {
    let mut spec = LatentSpec::default();
    if let Some(v) = a.frames {
        spec.frames = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.channels {
        spec.channels = v;
    }
    if let Some(r) = &a.redundancy {
        spec.redundancy_by_step = match r.as_slice() {
            [x] => [*x; 5],
            [a, b, c, d, e] => [*a, *b, *c, *d, *e],
            _ => return Err(CliError::usage("--redundancy takes one or five values")),
        };
    }
    if let Some(al) = &a.alphas {
        spec.alpha_schedule = al
            .as_slice()
            .try_into()
            .map_err(|_| CliError::usage("--alphas takes five values"))?;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(spec)
}

fn flat(l: &LatentState) -> Vec<f32> {
    l.frames()
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .collect()
}

pub fn run(a: &CodecArgs) -> Result<(), CliError> {
    if !(a.compress_threshold > 0.0 && a.compress_threshold <= 1.0) {
        return Err(CliError::usage("--compress-threshold must lie in (0, 1]"));
    }
    let (latents, masks) = match &a.latents {
        Some(path) => read_latents(path).map_err(|e| CliError::from(e).context(path.display()))?,
        None => synth_latents(a.seed, &synthetic_spec(a)?)
            .map_err(|e| CliError::usage(e.to_string()))?,
    };
    if let Some(path) = &a.save_latents {
        write_latents(path, &latents, &masks)
            .map_err(|e| CliError::from(e).context(path.display()))?;
    }
    let intra = latents
        .iter()
        .map(|l| intra_compress(l, a.compress_threshold))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(e.to_string()))?;
    let prompt = PromptId(a.seed);
    let entry = match a.base {
        Some(b) => {
            let base = StepId::new(b).map_err(|e| CliError::usage(e.to_string()))?;
            inter_compress_with_base(prompt, &intra, &masks, base)
        }
        None => inter_compress(prompt, &intra, &masks),
    }
    .map_err(|e| CliError::data(e.to_string()))?;

    let mut steps = Vec::with_capacity(latents.len());
    for (orig, ic) in latents.iter().zip(&intra) {
        let back =
            decompress_step(&entry, orig.step()).map_err(|e| CliError::internal(e.to_string()))?;
        let similarity = cosine_similarity(&flat(orig), &flat(&back))
            .map_err(|e| CliError::data(e.to_string()))?;
        steps.push(StepReport {
            step: orig.step().get(),
            key_frames: ic.map().key_count(),
            similarity,
            private_bytes: entry.step_bytes(orig.step()),
        });
    }
    let uncompressed = entry.uncompressed_step_bytes() * latents.len();
    let compressed = compressed_size(&entry);
    let report = CodecReport {
        shape: entry.shape(),
        compress_threshold: a.compress_threshold,
        base_step: entry.base_step().get(),
        common_key_frames: entry.common_keyframes().len(),
        uncompressed_bytes: uncompressed,
        compressed_bytes: compressed,
        ratio: uncompressed as f64 / compressed as f64,
        min_similarity: steps.iter().map(|s| s.similarity).fold(1.0, f64::min),
        steps,
        breakdown: entry.size_breakdown(),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &a.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

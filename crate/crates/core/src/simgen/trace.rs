//! Synthetic request traces and their JSONL form.
//!
//! A trace file starts with one header line carrying the format name,
//! version and generating spec, followed by one [`TraceRecord`] per line.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::engine::Request;
use crate::latent::{EmbeddingKind, PromptId};

use super::embedding::{fnv1a, EmbeddingModel};

pub const TRACE_FORMAT: &str = "latentcache-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace spec: {0}")]
    Spec(String),
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// How template popularity is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Popularity {
    /// One Zipf ranking over all object × background templates.
    Template,
    /// Independent Zipf rankings over objects and over backgrounds.
    Factored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSpec {
    pub n_requests: u64,
    pub n_objects: u32,
    pub n_backgrounds: u32,
    pub zipf_s: f64,
    pub popularity: Popularity,
    /// Requests between popularity re-rankings; `None` keeps the ranking fixed.
    pub decay_half_life: Option<u64>,
    /// Share of top-ranked templates that keep their rank at every re-ranking.
    pub stable_fraction: f64,
    pub embed_dim: usize,
    pub seed: u64,
    /// Tokens every prompt of a template carries.
    pub core_tokens: u32,
    /// Tokens drawn per request from the template's detail pool.
    pub detail_tokens: u32,
    pub detail_pool: u32,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            n_requests: 50_000,
            n_objects: 500,
            n_backgrounds: 500,
            zipf_s: 1.1,
            popularity: Popularity::Factored,
            decay_half_life: Some(10_000),
            stable_fraction: 0.0,
            embed_dim: defaults::EMBED_DIM,
            seed: 0,
            core_tokens: 4,
            detail_tokens: 0,
            detail_pool: 8,
        }
    }
}

impl TraceSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: &str| Err(TraceError::Spec(m.into()));
        if self.n_requests == 0 || self.n_objects == 0 || self.n_backgrounds == 0 {
            return err("request, object and background counts must be at least 1");
        }
        if !(self.zipf_s.is_finite() && self.zipf_s >= 0.0) {
            return err("zipf_s must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.stable_fraction) {
            return err("stable_fraction must lie in [0, 1]");
        }
        if self.decay_half_life == Some(0) {
            return err("decay_half_life must be at least 1");
        }
        if self.embed_dim == 0 {
            return err("embed_dim must be at least 1");
        }
        if self.core_tokens == 0 {
            return err("core_tokens must be at least 1");
        }
        if self.detail_tokens > self.detail_pool {
            return err("detail_tokens cannot exceed detail_pool");
        }
        Ok(())
    }

    pub fn templates(&self) -> usize {
        self.n_objects as usize * self.n_backgrounds as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub prompt: PromptId,
    pub arrival: u64,
    pub object: Vec<String>,
    pub background: Vec<String>,
    pub whole: Vec<String>,
    pub latent_seed: u64,
}

impl TraceRecord {
    pub fn to_request(&self, model: &EmbeddingModel) -> Request {
        Request {
            prompt: self.prompt,
            arrival: self.arrival,
            whole: model.embed(EmbeddingKind::Whole, &self.whole),
            object: model.embed(EmbeddingKind::Object, &self.object),
            background: model.embed(EmbeddingKind::Background, &self.background),
            latent_seed: self.latent_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    spec: TraceSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub spec: TraceSpec,
    pub records: Vec<TraceRecord>,
}

/// Popularity ranking over templates: `order[r]` is the template at rank `r`.
struct Ranking {
    order: Vec<usize>,
    protected: usize,
}

impl Ranking {
    fn new(n: usize, stable_fraction: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self {
            order,
            protected: (n as f64 * stable_fraction).ceil() as usize,
        }
    }

    /// One decay period. Protected top ranks stay; below them the upper
    /// half of the ranking keeps its order but moves from rank `r` to about
    /// `2r`, which halves its Zipf(1) weight, and the lower half is shuffled
    /// into the freed ranks as newly popular items.
    fn drift(&mut self, rng: &mut ChaCha8Rng) {
        let p = self.protected.min(self.order.len());
        let rest = &self.order[p..];
        if rest.len() < 2 {
            return;
        }
        let half = rest.len().div_ceil(2);
        let old = rest[..half].to_vec();
        let mut fresh = rest[half..].to_vec();
        fresh.shuffle(rng);
        let mut next = Vec::with_capacity(rest.len());
        let mut old = old.into_iter();
        let mut fresh = fresh.into_iter();
        loop {
            match (fresh.next(), old.next()) {
                (None, None) => break,
                (f, o) => next.extend(f.into_iter().chain(o)),
            }
        }
        self.order.truncate(p);
        self.order.extend(next);
    }
}

fn template_tokens(
    prefix: &str,
    index: u32,
    spec: &TraceSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut tokens: Vec<String> = (0..spec.core_tokens)
        .map(|k| format!("{prefix}{index}.{k}"))
        .collect();
    if spec.detail_tokens > 0 {
        let mut pool: Vec<u32> = (0..spec.detail_pool).collect();
        pool.shuffle(rng);
        tokens.extend(
            pool[..spec.detail_tokens as usize]
                .iter()
                .map(|d| format!("{prefix}{index}.d{d}")),
        );
    }
    tokens.sort();
    tokens
}

/// Zipf sampler over a drifting ranking of `n` items.
struct Popular {
    zipf: Zipf<f64>,
    ranking: Ranking,
}

impl Popular {
    fn new(n: usize, spec: &TraceSpec, rng: &mut ChaCha8Rng) -> Result<Self, TraceError> {
        Ok(Self {
            zipf: Zipf::new(n as f64, spec.zipf_s).map_err(|e| TraceError::Spec(e.to_string()))?,
            ranking: Ranking::new(n, spec.stable_fraction, rng),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let n = self.ranking.order.len();
        let rank = (self.zipf.sample(rng) as usize).clamp(1, n) - 1;
        self.ranking.order[rank]
    }
}

/// Draws a trace from the object × background template grid.
pub fn gen_trace(spec: &TraceSpec) -> Result<Trace, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (no, nb) = (spec.n_objects as usize, spec.n_backgrounds as usize);
    let mut pools = match spec.popularity {
        Popularity::Template => vec![Popular::new(no * nb, spec, &mut rng)?],
        Popularity::Factored => vec![
            Popular::new(no, spec, &mut rng)?,
            Popular::new(nb, spec, &mut rng)?,
        ],
    };
    let mut ids: HashMap<Vec<String>, PromptId> = HashMap::new();
    let mut records = Vec::with_capacity(spec.n_requests as usize);
    for arrival in 0..spec.n_requests {
        if let Some(h) = spec.decay_half_life {
            if arrival > 0 && arrival % h == 0 {
                for p in &mut pools {
                    p.ranking.drift(&mut rng);
                }
            }
        }
        let (obj, bg) = match pools.as_slice() {
            [grid] => {
                let t = grid.sample(&mut rng);
                (t / nb, t % nb)
            }
            [objects, backgrounds] => (objects.sample(&mut rng), backgrounds.sample(&mut rng)),
            _ => unreachable!("one or two popularity pools"),
        };
        let object = template_tokens("o", obj as u32, spec, &mut rng);
        let background = template_tokens("b", bg as u32, spec, &mut rng);
        let mut whole: Vec<String> = object.iter().chain(&background).cloned().collect();
        whole.sort();
        let next = PromptId(ids.len() as u64);
        let prompt = *ids.entry(whole.clone()).or_insert(next);
        let latent_seed = fnv1a(whole.join(" ").as_bytes()) ^ spec.seed;
        records.push(TraceRecord {
            prompt,
            arrival,
            object,
            background,
            whole,
            latent_seed,
        });
    }
    Ok(Trace {
        spec: spec.clone(),
        records,
    })
}

impl Trace {
    /// Embedding model matching this trace's dimension and seed.
    pub fn embedding_model(&self) -> EmbeddingModel {
        EmbeddingModel::new(self.spec.embed_dim, self.spec.seed)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), TraceError> {
        let header = Header {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            spec: self.spec.clone(),
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate();
        let header_line = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(TraceError::Parse {
                    line: 1,
                    msg: "empty trace file".into(),
                })
            }
        };
        let header: Header = serde_json::from_str(&header_line).map_err(|e| TraceError::Parse {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(TraceError::Parse {
                line: 1,
                msg: format!(
                    "unsupported trace format {} v{}",
                    header.format, header.version
                ),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if r.object.is_empty() || r.background.is_empty() || r.whole.is_empty() {
                return Err(TraceError::Parse {
                    line: i + 1,
                    msg: "token sets must be nonempty".into(),
                });
            }
            records.push(r);
        }
        Ok(Self {
            spec: header.spec,
            records,
        })
    }
}

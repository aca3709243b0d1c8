use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use latentcache::engine::{CostReport, Decision, Engine, Metrics, RequestOutcome, StepBins};
use latentcache::simgen::{
    gen_trace as generate, run_trace, working_set, SyntheticSource, Trace, TraceSpec,
};
use latentcache::store::Policy;

use crate::args::{BenchArgs, GenTraceArgs, RunArgs, SimulateArgs};
use crate::config::Config;
use crate::error::CliError;

pub fn gen_trace(a: &GenTraceArgs) -> Result<(), CliError> {
    let spec = TraceSpec {
        n_requests: a.requests,
        n_objects: a.objects,
        n_backgrounds: a.backgrounds,
        zipf_s: a.zipf,
        popularity: a.popularity.into(),
        decay_half_life: (a.half_life > 0).then_some(a.half_life),
        stable_fraction: a.stable_fraction,
        embed_dim: a.embed_dim,
        seed: a.seed,
        core_tokens: a.core_tokens,
        detail_tokens: a.detail_tokens,
        detail_pool: a.detail_pool,
    };
    let trace = generate(&spec)?;
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::from(e).context(path.display()))?;
            trace.write_jsonl(BufWriter::new(file))?;
        }
        None => trace.write_jsonl(std::io::stdout().lock())?,
    }
    Ok(())
}

/// Parses `123`, `10KB`, `10MB`, `1GB` (decimal units) or `1.5%` of `working_set`.
pub fn parse_capacity(
    s: &str,
    working_set: impl FnOnce() -> Result<u64, CliError>,
) -> Result<u64, CliError> {
    let s = s.trim();
    let bad = || CliError::usage(format!("invalid capacity {s:?}"));
    if let Some(pct) = s.strip_suffix('%') {
        let p: f64 = pct.trim().parse().map_err(|_| bad())?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(bad());
        }
        return Ok((working_set()? as f64 * p / 100.0).floor() as u64);
    }
    let upper = s.to_ascii_uppercase();
    let (num, mult) = [("GB", 1e9), ("MB", 1e6), ("KB", 1e3), ("B", 1.0)]
        .iter()
        .find_map(|(suffix, m)| {
            upper
                .strip_suffix(suffix)
                .map(|n| (n.trim().to_owned(), *m))
        })
        .unwrap_or((upper.clone(), 1.0));
    if mult == 1.0 {
        return num.parse().map_err(|_| bad());
    }
    let v: f64 = num.parse().map_err(|_| bad())?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(bad());
    }
    Ok((v * mult).round() as u64)
}

/// Config file plus command-line overrides, validated.
fn resolve(run: &RunArgs) -> Result<Config, CliError> {
    let mut cfg = Config::resolve(run.config.as_deref())?;
    if let Some(t) = &run.trace {
        cfg.trace = Some(t.clone());
    }
    if let Some(o) = &run.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = run.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = cfg.seed {
        cfg.latents.seed = s;
    }
    let e = &mut cfg.engine;
    if let Some(p) = run.policy {
        e.policy = p;
    }
    if let Some(t) = run.hit_threshold {
        e.hit_threshold = t;
    }
    if let Some(t) = run.compress_threshold {
        e.compress_threshold = t;
    }
    if let Some(b) = &run.bins {
        e.bins = StepBins::new(b.clone())?;
    }
    if let Some(r) = run.gpu_rate {
        e.pricing.gpu_rate = r;
    }
    if let Some(r) = run.storage_rate {
        e.pricing.storage_rate = Some(r);
    }
    if cfg.trace.is_none() {
        return Err(CliError::usage(
            "no trace given (use --trace or the config file)",
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let file = File::open(path).map_err(|e| CliError::from(e).context(path.display()))?;
    Trace::read_jsonl(BufReader::new(file))
        .map_err(|e| CliError::data(e.to_string()).context(path.display()))
}

/// One simulated run as written to the metrics file.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub policy: Policy,
    pub capacity_bytes: u64,
    pub report: CostReport,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize)]
struct RequestRow {
    arrival: u64,
    prompt: u64,
    decision: &'static str,
    source: Option<u64>,
    background_source: Option<u64>,
    score: Option<f64>,
    desired_step: Option<u32>,
    skipped: u32,
    latency_secs: f64,
    inserted_steps: usize,
    evicted: usize,
    insert_refused: bool,
}

impl From<&RequestOutcome> for RequestRow {
    fn from(o: &RequestOutcome) -> Self {
        let (decision, source, background_source, score) = match o.decision {
            Decision::Miss => ("miss", None, None, None),
            Decision::WholeHit { source, score } => ("whole", Some(source.0), None, Some(score)),
            Decision::DecoupledHit {
                object_source,
                background_source,
                score,
            } => (
                "decoupled",
                Some(object_source.0),
                Some(background_source.0),
                Some(score),
            ),
        };
        Self {
            arrival: o.arrival,
            prompt: o.prompt.0,
            decision,
            source,
            background_source,
            score,
            desired_step: o.desired.map(|s| s.get()),
            skipped: o.skipped,
            latency_secs: o.latency,
            inserted_steps: o.inserted.len(),
            evicted: o.evicted,
            insert_refused: o.insert_refused,
        }
    }
}

fn run_one(
    cfg: &Config,
    trace: &Trace,
    policy: Policy,
    capacity: u64,
    mut csv: Option<&mut csv::Writer<BufWriter<File>>>,
) -> Result<RunSummary, CliError> {
    let mut engine_cfg = cfg.engine.clone();
    engine_cfg.policy = policy;
    engine_cfg.capacity_bytes = capacity;
    let source =
        SyntheticSource::new(cfg.latents.clone()).map_err(|e| CliError::usage(e.to_string()))?;
    let mut engine = Engine::new(engine_cfg, trace.spec.embed_dim)?;
    let mut write_err = None;
    run_trace(&mut engine, trace, &source, &trace.embedding_model(), |o| {
        if let Some(w) = csv.as_deref_mut() {
            if let Err(e) = w.serialize(RequestRow::from(o)) {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    Ok(RunSummary {
        policy,
        capacity_bytes: capacity,
        report: engine.report()?,
        metrics: engine.metrics().clone(),
    })
}

fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::from(e).context(dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))
}

fn working_set_of(cfg: &Config, trace: &Trace) -> Result<u64, CliError> {
    Ok(working_set(
        trace,
        &cfg.latents,
        cfg.engine.compress_threshold,
    )?)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.run)?;
    let trace = load_trace(cfg.trace.as_deref().expect("resolved"))?;
    let capacity = match &a.capacity_bytes {
        Some(s) => parse_capacity(s, || working_set_of(&cfg, &trace))?,
        None => cfg.engine.capacity_bytes,
    };
    let dir = out_dir(&cfg)?;
    let policies = if a.all_policies {
        Policy::ALL.to_vec()
    } else {
        vec![cfg.engine.policy]
    };
    let mut runs = Vec::new();
    for policy in policies {
        let name = if a.all_policies {
            format!("requests-{}.csv", policy.name())
        } else {
            "requests.csv".into()
        };
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::from(e).context(path.display()))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        let run = run_one(&cfg, &trace, policy, capacity, Some(&mut csv))?;
        csv.flush()?;
        println!(
            "{:<6} hit rate {:.4}  savings {:.4}  throughput x{:.4}  cost/video ${:.4}",
            policy.name(),
            run.report.hit_rate,
            run.report.computation_savings,
            run.report.throughput_vs_nocache,
            run.report.cost_per_video
        );
        runs.push(run);
    }
    write_json(&dir.join("metrics.json"), &runs)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    capacity_bytes: u64,
    policy: Policy,
    requests: u64,
    hit_rate: f64,
    computation_savings: f64,
    throughput_vs_nocache: f64,
    mean_latency_secs: f64,
}

pub fn bench_policies(a: &BenchArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.run)?;
    let trace = load_trace(cfg.trace.as_deref().expect("resolved"))?;
    let mut ws = None;
    let mut capacities = Vec::with_capacity(a.capacities.len());
    for c in &a.capacities {
        capacities.push(parse_capacity(c, || {
            if ws.is_none() {
                ws = Some(working_set_of(&cfg, &trace)?);
            }
            Ok(ws.expect("just set"))
        })?);
    }
    let policies = a.policies.clone().unwrap_or_else(|| Policy::ALL.to_vec());
    let mut rows = Vec::new();
    for &capacity in &capacities {
        for &policy in &policies {
            let run = run_one(&cfg, &trace, policy, capacity, None)?;
            eprintln!(
                "{capacity:>12} {:<6} savings {:.4}",
                policy.name(),
                run.report.computation_savings
            );
            rows.push(BenchRow {
                capacity_bytes: capacity,
                policy,
                requests: run.report.requests,
                hit_rate: run.report.hit_rate,
                computation_savings: run.report.computation_savings,
                throughput_vs_nocache: run.report.throughput_vs_nocache,
                mean_latency_secs: run.report.mean_latency_secs,
            });
        }
    }
    let sink: Box<dyn Write> = match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
            let path = dir.join("bench.csv");
            Box::new(File::create(&path).map_err(|e| CliError::from(e).context(path.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

use proptest::prelude::*;

use latentcache::codec::{
    compressed_size, decompress_step, inter_compress, intra_compress, solve_alpha,
};
use latentcache::engine::{decide, similarity_to_step, Engine, EngineConfig, StepBins, Verdict};
use latentcache::simgen::{
    gen_trace, run_trace, synth_latents, LatentSpec, SyntheticSource, TraceSpec,
};
use latentcache::stitcher::{stitch, StitchInput};
use latentcache::store::{CacheStore, Policy, StepEntry};
use latentcache::vindex::VectorIndex;
use latentcache::{
    cosine_similarity, frame_similarity, Bitmap, Embedding, EmbeddingKind, Frame, FrameShape,
    LatentState, MaskSet, PromptId, StepId,
};

fn small_spec(frames: usize, redundancy: f64, noise: f64) -> LatentSpec {
    LatentSpec {
        frames,
        height: 3,
        width: 4,
        channels: 2,
        redundancy_by_step: [redundancy; 5],
        noise_sigma: noise,
        ..LatentSpec::default()
    }
}

fn compress(
    seed: u64,
    spec: &LatentSpec,
) -> (Vec<LatentState>, latentcache::codec::CompressedEntry) {
    let (latents, masks) = synth_latents(seed, spec).unwrap();
    let intra: Vec<_> = latents
        .iter()
        .map(|l| intra_compress(l, 0.99).unwrap())
        .collect();
    let entry = inter_compress(PromptId(seed), &intra, &masks).unwrap();
    (latents, entry)
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_self_and_scale(a in vector(16), b in vector(16), k in 0.01f32..100.0) {
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let ka: Vec<f32> = a.iter().map(|x| x * k).collect();
        let d = cosine_similarity(&ka, &b).unwrap() - cosine_similarity(&a, &b).unwrap();
        prop_assert!(d.abs() < 1e-6);
        let fs = FrameShape::new(2, 4, 2).unwrap();
        let (fa, fb) = (Frame::new(fs, a).unwrap(), Frame::new(fs, b).unwrap());
        prop_assert_eq!(frame_similarity(&fa, &fb).unwrap(), frame_similarity(&fb, &fa).unwrap());
    }

    #[test]
    fn decompression_exactness(seed in any::<u64>(), frames in 1usize..12, r in 0.0f64..=1.0, noise in 0.0f64..0.2) {
        let spec = small_spec(frames, r, noise);
        let (latents, entry) = compress(seed, &spec);
        for orig in &latents {
            let back = decompress_step(&entry, orig.step()).unwrap();
            prop_assert_eq!(back.shape(), orig.shape());
            prop_assert!(back.frames()[0].bit_eq(&orig.frames()[0]));
            let rec = entry.record(orig.step()).unwrap();
            for (k, f) in rec.extra_frames() {
                prop_assert!(back.frames()[*k as usize].bit_eq(f));
            }
            for j in 0..frames {
                let target = rec.map().target(j);
                prop_assert!(back.frames()[j].bit_eq(&back.frames()[target]));
            }
        }
        prop_assert_eq!(compressed_size(&entry), entry.to_bytes().len());
    }

    #[test]
    fn less_redundancy_never_shrinks(seed in any::<u64>(), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let (_, a) = compress(seed, &small_spec(10, hi, 0.01));
        let (_, b) = compress(seed, &small_spec(10, lo, 0.01));
        prop_assert!(compressed_size(&b) >= compressed_size(&a));
    }

    #[test]
    fn proportional_steps_are_lossless(seed in any::<u64>(), frames in 2usize..10) {
        let spec = LatentSpec { noise_sigma: 0.0, ..small_spec(frames, 0.0, 0.0) };
        let (latents, entry) = compress(seed, &spec);
        for orig in &latents {
            let back = decompress_step(&entry, orig.step()).unwrap();
            for (x, y) in flat(&back).iter().zip(flat(orig)) {
                prop_assert!((x - y).abs() <= 1e-5 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn alpha_minimizes_sse(pairs in prop::collection::vec((-2.0f32..2.0, -2.0f32..2.0), 2..64)) {
        let (s, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        prop_assume!(b.iter().any(|x| x.abs() > 1e-3));
        let a = f64::from(solve_alpha(&s, &b).unwrap());
        let sse = |a: f64| s.iter().zip(&b).map(|(&x, &y)| (f64::from(x) - a * f64::from(y)).powi(2)).sum::<f64>();
        prop_assert!(sse(a) <= sse(a + 1e-3) && sse(a) <= sse(a - 1e-3));
    }
}

fn flat(l: &LatentState) -> Vec<f32> {
    l.frames()
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .collect()
}

#[derive(Debug, Clone)]
enum IndexOp {
    Insert(u64, Vec<f32>),
    Remove(usize),
    Query(Vec<f32>),
}

fn index_op(dim: usize) -> impl Strategy<Value = IndexOp> {
    prop_oneof![
        (0u64..40, vector(dim)).prop_map(|(p, v)| IndexOp::Insert(p, v)),
        (0usize..64).prop_map(IndexOp::Remove),
        vector(dim).prop_map(IndexOp::Query),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_matches_linear_scan(ops in prop::collection::vec(index_op(6), 1..80)) {
        let mut index = VectorIndex::new(6);
        let mut live: Vec<(PromptId, Embedding)> = Vec::new();
        for op in ops {
            match op {
                IndexOp::Insert(p, v) => {
                    let e = Embedding::new(EmbeddingKind::Whole, v).unwrap();
                    let obj = e.clone().with_kind(EmbeddingKind::Object);
                    let bg = e.clone().with_kind(EmbeddingKind::Background);
                    let dup = live.iter().any(|(q, _)| q.0 == p);
                    prop_assert_eq!(index.insert(&e, &obj, &bg, PromptId(p)).is_err(), dup);
                    if !dup {
                        live.push((PromptId(p), e));
                    }
                }
                IndexOp::Remove(i) if !live.is_empty() => {
                    let (p, _) = live.remove(i % live.len());
                    index.remove(p).unwrap();
                }
                IndexOp::Remove(_) => {}
                IndexOp::Query(v) => {
                    let q = Embedding::new(EmbeddingKind::Whole, v).unwrap();
                    let mut best: Option<(f64, PromptId)> = None;
                    for (p, e) in &live {
                        let s = q.values().iter().zip(e.values()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum::<f64>().clamp(-1.0, 1.0);
                        if best.is_none_or(|(bs, bp)| s > bs || (s == bs && *p < bp)) {
                            best = Some((s, *p));
                        }
                    }
                    for kind in EmbeddingKind::ALL {
                        let got = index.query_top1(kind, &q.clone().with_kind(kind)).map(|r| (r.score, r.prompt));
                        prop_assert_eq!(got, best);
                    }
                }
            }
            let mut ids: Vec<PromptId> = live.iter().map(|(p, _)| *p).collect();
            ids.sort();
            for kind in EmbeddingKind::ALL {
                prop_assert_eq!(index.prompts(kind), ids.clone());
            }
        }
    }

    #[test]
    fn insert_then_remove_restores(seed_vectors in prop::collection::vec(vector(5), 1..10), extra in vector(5)) {
        let mut index = VectorIndex::new(5);
        for (i, v) in seed_vectors.iter().enumerate() {
            let e = Embedding::new(EmbeddingKind::Whole, v.clone()).unwrap();
            index.insert(&e, &e.clone().with_kind(EmbeddingKind::Object), &e.clone().with_kind(EmbeddingKind::Background), PromptId(i as u64)).unwrap();
        }
        let before: Vec<_> = EmbeddingKind::ALL.iter().flat_map(|&k| index.prompts(k).into_iter().map(move |p| (k, p))).map(|(k, p)| index.embedding(k, p)).collect();
        let e = Embedding::new(EmbeddingKind::Whole, extra).unwrap();
        index.insert(&e, &e.clone().with_kind(EmbeddingKind::Object), &e.clone().with_kind(EmbeddingKind::Background), PromptId(999)).unwrap();
        index.remove(PromptId(999)).unwrap();
        let after: Vec<_> = EmbeddingKind::ALL.iter().flat_map(|&k| index.prompts(k).into_iter().map(move |p| (k, p))).map(|(k, p)| index.embedding(k, p)).collect();
        prop_assert_eq!(before, after);
    }
}

/// Reference priority, smaller is evicted first.
fn reference_priority(policy: Policy, e: &StepEntry, now: u64) -> f64 {
    let benefit = (e.f + 1) as f64 * f64::from(e.step.get());
    match policy {
        Policy::Fifo => e.seq as f64,
        Policy::Lru => e.last_access as f64,
        Policy::Lcbfu => benefit,
        Policy::Lrbu => {
            benefit / (e.capacity.max(1) as f64 * (now.saturating_sub(e.last_access)).max(1) as f64)
        }
    }
}

#[derive(Debug, Clone)]
enum StoreOp {
    Insert(u64, u8),
    Get(u64, u8),
    Evict,
}

fn store_op() -> impl Strategy<Value = StoreOp> {
    prop_oneof![
        (0u64..12, 1u8..32).prop_map(|(p, m)| StoreOp::Insert(p, m)),
        (0u64..12, 0u8..5).prop_map(|(p, s)| StoreOp::Get(p, s)),
        Just(StoreOp::Evict),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn store_invariants(policy in prop::sample::select(Policy::ALL.to_vec()), capacity in 0u64..6000, ops in prop::collection::vec(store_op(), 1..60)) {
        let spec = small_spec(6, 0.5, 0.01);
        let mut store = CacheStore::new(capacity, policy);
        for (now, op) in ops.into_iter().enumerate() {
            let now = now as u64;
            match op {
                StoreOp::Insert(p, step_mask) => {
                    let (latents, masks) = synth_latents(p, &spec).unwrap();
                    let steps: Vec<StepId> = StepId::cached()
                        .into_iter()
                        .enumerate()
                        .filter(|(i, s)| step_mask >> i & 1 == 1 && !store.cached_steps(PromptId(p)).contains(s))
                        .map(|(_, s)| s)
                        .collect();
                    if steps.is_empty() {
                        continue;
                    }
                    let intra: Vec<_> = latents.iter().map(|l| intra_compress(l, 0.99).unwrap()).collect();
                    let entry = inter_compress(PromptId(p), &intra, &masks).unwrap();
                    let _ = store.insert_steps(entry, &steps, now);
                }
                StoreOp::Get(p, i) => {
                    let desired = StepId::cached()[i as usize];
                    let expect = store.best_step(PromptId(p), desired);
                    let got = store.get_step(PromptId(p), desired, now).unwrap().map(|(l, s)| {
                        assert_eq!(l.step(), s);
                        s
                    });
                    prop_assert_eq!(got, expect);
                }
                StoreOp::Evict => {
                    let before: Vec<StepEntry> = store.entries().collect();
                    if let Ok(ev) = store.evict_one(now) {
                        let pv = reference_priority(policy, &ev.entry, now);
                        for e in &before {
                            prop_assert!(pv <= reference_priority(policy, e, now));
                        }
                    } else {
                        prop_assert!(before.is_empty());
                    }
                }
            }
            prop_assert!(store.used() <= store.capacity_limit());
            prop_assert_eq!(store.used(), store.recompute_used());
            for e in store.entries().collect::<Vec<_>>() {
                let group = store.group_of(e.prompt, e.step).unwrap();
                prop_assert!(decompress_step(group, e.step).is_ok());
            }
        }
    }

    #[test]
    fn stitch_takes_one_source_per_pixel(h in 1usize..6, w in 1usize..6, bits in prop::collection::vec(any::<(bool, bool)>(), 36)) {
        let fs = FrameShape::new(h, w, 2).unwrap();
        let step = StepId::new(20).unwrap();
        let obj = LatentState::new(step, vec![Frame::filled(fs, 1.5).unwrap()]).unwrap();
        let bg = LatentState::new(step, vec![Frame::filled(fs, -7.0).unwrap()]).unwrap();
        let om = MaskSet::from_object(vec![Bitmap::from_fn(h, w, |r, c| bits[r * w + c].0)]).unwrap();
        let bm = MaskSet::from_object(vec![Bitmap::from_fn(h, w, |r, c| bits[r * w + c].1)]).unwrap();
        let out = stitch(&StitchInput { object_latent: &obj, object_masks: &om, background_latent: &bg, background_masks: &bm }).unwrap();
        for r in 0..h {
            for c in 0..w {
                let px = out.frames()[0].pixel(r, c);
                let (a, b) = bits[r * w + c];
                let want: &[f32] = if a || b { &[1.5, 1.5] } else { &[-7.0, -7.0] };
                prop_assert_eq!(px, want);
            }
        }
    }

    #[test]
    fn decide_is_symmetric(w in 0.0f64..=1.0, o in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        prop_assert_eq!(decide(w, o, b, t), decide(w, b, o, t));
        let score = decide(w, o, b, t).score();
        let raised = decide((w + 0.05).min(1.0), o, b, t).score();
        prop_assert!(raised.unwrap_or(-1.0) >= score.unwrap_or(-1.0));
    }

    #[test]
    fn step_mapping_is_monotone(a in 0.65f64..=1.0, b in 0.65f64..=1.0) {
        let bins = StepBins::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(similarity_to_step(lo, &bins).unwrap() <= similarity_to_step(hi, &bins).unwrap());
    }
}

#[test]
fn decide_threshold_ties() {
    assert_eq!(decide(0.65, 0.0, 0.0, 0.65), Verdict::Whole { score: 0.65 });
    assert_eq!(
        decide(0.5, 0.65, 0.7, 0.65),
        Verdict::Decoupled { score: 0.65 }
    );
    assert_eq!(decide(0.7, 0.7, 0.9, 0.65), Verdict::Whole { score: 0.7 });
}

#[test]
fn metrics_add_up_over_a_trace() {
    let spec = TraceSpec {
        n_requests: 800,
        n_objects: 20,
        n_backgrounds: 20,
        embed_dim: 16,
        seed: 4,
        ..TraceSpec::default()
    };
    let trace = gen_trace(&spec).unwrap();
    let source = SyntheticSource::new(small_spec(4, 0.5, 0.01)).unwrap();
    let mut engine = Engine::new(
        EngineConfig {
            capacity_bytes: 40_000,
            ..EngineConfig::default()
        },
        16,
    )
    .unwrap();
    let (mut time, mut skipped) = (0.0f64, 0u64);
    run_trace(
        &mut engine,
        &trace,
        &source,
        &trace.embedding_model(),
        |o| {
            time += o.latency;
            skipped += u64::from(o.skipped);
        },
    )
    .unwrap();
    let m = engine.metrics();
    assert_eq!(m.simulated_time, time);
    assert_eq!(m.skipped_steps, skipped);
    assert_eq!(m.computation_savings(50), skipped as f64 / (50.0 * 800.0));
    assert_eq!(m.requests, 800);
    assert_eq!(m.whole_hits + m.decoupled_hits + m.misses, 800);
    assert!(m.hits() > 0 && m.misses > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_latents_are_usable(
        seed in any::<u64>(),
        frames in 1usize..20,
        h in 1usize..6,
        w in 1usize..6,
        r in prop::array::uniform5(0.0f64..=1.0),
        alpha in prop::array::uniform5(-2.0f64..2.0),
        noise in 0.0f64..1.0,
    ) {
        let spec = LatentSpec { frames, height: h, width: w, channels: 2, redundancy_by_step: r, alpha_schedule: alpha, noise_sigma: noise, seed: 0 };
        let (a, ma) = synth_latents(seed, &spec).unwrap();
        let (b, mb) = synth_latents(seed, &spec).unwrap();
        prop_assert_eq!(ma, mb);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(x.bit_eq(y));
            prop_assert_eq!(x.shape(), spec.shape());
            prop_assert!(flat(x).iter().all(|v| v.is_finite()));
            prop_assert!(intra_compress(x, 0.99).is_ok());
        }
    }
}

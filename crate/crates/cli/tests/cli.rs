use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_LATENTS: &str = "[latents]\nframes = 8\nheight = 4\nwidth = 4\nchannels = 2\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latentcache"));
    c.env_remove("LATENTCACHE_CONFIG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn trace(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec!["gen-trace", "--embed-dim", "16", "--out", name];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn metrics(dir: &Path) -> Vec<Value> {
    let text = std::fs::read_to_string(dir.join("metrics.json")).unwrap();
    serde_json::from_str::<Value>(&text)
        .unwrap()
        .as_array()
        .unwrap()
        .clone()
}

#[test]
fn gen_trace_writes_header_and_records() {
    let dir = tempfile::tempdir().unwrap();
    trace(
        dir.path(),
        "t.jsonl",
        &["--requests", "50", "--objects", "5", "--backgrounds", "5"],
    );
    let text = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 51);
    let header: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(header["format"], "latentcache-trace");
    assert_eq!(header["spec"]["n_requests"], 50);
    for l in &lines[1..] {
        let r: Value = serde_json::from_str(l).unwrap();
        assert!(r["whole"].as_array().unwrap().len() >= 2);
    }
}

#[test]
fn gen_trace_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    trace(dir.path(), "a.jsonl", &["--requests", "300", "--seed", "5"]);
    trace(dir.path(), "b.jsonl", &["--requests", "300", "--seed", "5"]);
    trace(dir.path(), "c.jsonl", &["--requests", "300", "--seed", "6"]);
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen-trace", "--zipf", "-0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zipf"));
    assert_eq!(
        run(dir.path(), &["gen-trace", "--requests", "many"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["simulate"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["simulate", "--trace", "missing.jsonl"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"format\":\"nope\"}\n").unwrap();
    let out = run(dir.path(), &["simulate", "--trace", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl"));
    std::fs::write(dir.path().join("bad.toml"), "capacity = 3\n").unwrap();
    assert_eq!(
        run(dir.path(), &["simulate", "--config", "bad.toml"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.ltcl"), b"LTCL garbage").unwrap();
    assert_eq!(
        run(dir.path(), &["codec", "--latents", "bad.ltcl"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn single_template_hits_all_but_the_first() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    trace(
        p,
        "one.jsonl",
        &["--requests", "200", "--objects", "1", "--backgrounds", "1"],
    );
    std::fs::write(
        p.join("run.toml"),
        format!("trace = \"one.jsonl\"\nout = \"res\"\n{SMALL_LATENTS}"),
    )
    .unwrap();
    ok(p, &["simulate", "--config", "run.toml"]);
    let runs = metrics(&p.join("res"));
    assert_eq!(runs.len(), 1);
    assert_eq!(
        runs[0]["report"]["hit_rate"].as_f64().unwrap(),
        199.0 / 200.0
    );
    let csv = std::fs::read_to_string(p.join("res/requests.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.lines().nth(1).unwrap().contains(",miss,"));
    assert!(csv.lines().nth(2).unwrap().contains(",whole,"));
}

#[test]
fn zero_capacity_never_hits() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    trace(
        p,
        "t.jsonl",
        &["--requests", "400", "--objects", "4", "--backgrounds", "4"],
    );
    std::fs::write(p.join("run.toml"), SMALL_LATENTS).unwrap();
    ok(
        p,
        &[
            "simulate",
            "--config",
            "run.toml",
            "--trace",
            "t.jsonl",
            "--capacity-bytes",
            "0",
            "--out",
            "res",
        ],
    );
    let runs = metrics(&p.join("res"));
    let r = &runs[0]["report"];
    assert_eq!(r["hit_rate"].as_f64().unwrap(), 0.0);
    let ratio = r["throughput_vs_nocache"].as_f64().unwrap();
    assert!((ratio - 242.0 / 245.74).abs() < 1e-12);
    assert!((ratio - 0.9848).abs() < 5e-5);
    assert_eq!(runs[0]["metrics"]["insert_refused"], 400);
}

#[test]
fn all_policies_share_the_trace_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    trace(
        p,
        "t.jsonl",
        &[
            "--requests",
            "1500",
            "--objects",
            "20",
            "--backgrounds",
            "20",
            "--half-life",
            "500",
        ],
    );
    std::fs::write(
        p.join("run.toml"),
        format!("trace = \"t.jsonl\"\n{SMALL_LATENTS}"),
    )
    .unwrap();
    for out in ["a", "b"] {
        ok(
            p,
            &[
                "simulate",
                "--config",
                "run.toml",
                "--all-policies",
                "--capacity-bytes",
                "5%",
                "--out",
                out,
            ],
        );
    }
    let runs = metrics(&p.join("a"));
    let names: Vec<&str> = runs.iter().map(|r| r["policy"].as_str().unwrap()).collect();
    assert_eq!(names, ["fifo", "lru", "lcbfu", "lrbu"]);
    for r in &runs {
        assert_eq!(r["report"]["requests"], 1500);
        assert_eq!(
            r["report"]["rolling_throughput"].as_array().unwrap().len(),
            2
        );
        assert_eq!(r["capacity_bytes"], runs[0]["capacity_bytes"]);
    }
    for f in ["metrics.json", "requests-lrbu.csv", "requests-fifo.csv"] {
        assert_eq!(
            std::fs::read(p.join("a").join(f)).unwrap(),
            std::fs::read(p.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_config_and_env_names_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    trace(
        p,
        "t.jsonl",
        &["--requests", "100", "--objects", "3", "--backgrounds", "3"],
    );
    std::fs::write(
        p.join("run.toml"),
        format!("trace = \"t.jsonl\"\nout = \"res\"\n[engine]\npolicy = \"fifo\"\n{SMALL_LATENTS}"),
    )
    .unwrap();
    let out = bin()
        .current_dir(p)
        .env("LATENTCACHE_CONFIG", p.join("run.toml"))
        .args([
            "simulate",
            "--policy",
            "lru",
            "--gpu-rate",
            "7.34",
            "--storage-rate",
            "0.02",
            "--bins",
            "0.7,0.75,0.8,0.85,0.9",
            "--hit-threshold",
            "0.7",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let runs = metrics(&p.join("res"));
    assert_eq!(runs[0]["policy"], "lru");
    let r = &runs[0]["report"];
    let gpu = r["gpu_cost_per_video"].as_f64().unwrap();
    assert!((gpu - 7.34 * r["mean_latency_secs"].as_f64().unwrap() / 3600.0).abs() < 1e-12);
    assert!(r["storage_cost_per_video"].as_f64().unwrap() > 0.0);

    let bad = bin()
        .current_dir(p)
        .env("LATENTCACHE_CONFIG", p.join("run.toml"))
        .args(["simulate", "--hit-threshold", "0.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn bench_single_cell_and_stable_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    trace(
        p,
        "t.jsonl",
        &[
            "--requests",
            "600",
            "--objects",
            "10",
            "--backgrounds",
            "10",
        ],
    );
    std::fs::write(
        p.join("run.toml"),
        format!("trace = \"t.jsonl\"\n{SMALL_LATENTS}"),
    )
    .unwrap();
    let a = ok(
        p,
        &[
            "bench-policies",
            "--config",
            "run.toml",
            "--capacities",
            "20KB",
            "--policies",
            "lrbu",
        ],
    );
    let b = ok(
        p,
        &[
            "bench-policies",
            "--config",
            "run.toml",
            "--capacities",
            "20KB",
            "--policies",
            "lrbu",
        ],
    );
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("capacity_bytes,policy,"));
    assert!(lines[1].starts_with("20000,lrbu,600,"));
}

#[test]
fn lrbu_keeps_up_with_lcbfu_on_a_decaying_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-trace",
            "--embed-dim",
            "64",
            "--seed",
            "1",
            "--out",
            "t.jsonl",
        ],
    );
    std::fs::write(p.join("run.toml"), "trace = \"t.jsonl\"\nout = \"res\"\n[latents]\nframes = 16\nheight = 8\nwidth = 8\nchannels = 4\n").unwrap();
    ok(
        p,
        &[
            "bench-policies",
            "--config",
            "run.toml",
            "--capacities",
            "1MB,10MB,100MB",
            "--policies",
            "lcbfu,lrbu",
        ],
    );
    let mut rd = csv::Reader::from_path(p.join("res/bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        assert_eq!((&pair[0][1], &pair[1][1]), ("lcbfu", "lrbu"));
        let lcbfu: f64 = pair[0][4].parse().unwrap();
        let lrbu: f64 = pair[1][4].parse().unwrap();
        assert!(
            lrbu >= lcbfu,
            "capacity {}: lrbu {lrbu} < lcbfu {lcbfu}",
            &pair[0][0]
        );
    }
}

#[test]
fn codec_reports_fidelity_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = ok(
        p,
        &[
            "codec",
            "--frames",
            "64",
            "--height",
            "40",
            "--width",
            "64",
            "--redundancy",
            "1.0",
            "--noise",
            "0",
            "--save-latents",
            "still.ltcl",
        ],
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["uncompressed_bytes"], 13_107_200);
    assert!(r["ratio"].as_f64().unwrap() >= 16.0);
    assert_eq!(r["min_similarity"].as_f64().unwrap(), 1.0);
    let b = &r["breakdown"];
    let parts = [
        "first_frames",
        "base_keyframes",
        "alphas",
        "extra_frames",
        "maps",
        "masks",
        "headers",
    ];
    let sum: u64 = parts.iter().map(|k| b[*k].as_u64().unwrap()).sum();
    assert_eq!(sum, r["compressed_bytes"].as_u64().unwrap());

    let again = ok(p, &["codec", "--latents", "still.ltcl"]);
    let r2: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(r2["compressed_bytes"], r["compressed_bytes"]);

    let worst = ok(
        p,
        &[
            "codec",
            "--frames",
            "8",
            "--height",
            "4",
            "--width",
            "4",
            "--redundancy",
            "0",
            "--noise",
            "3",
            "--out",
            "w.json",
        ],
    );
    assert!(worst.stdout.is_empty());
    let w: Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("w.json")).unwrap()).unwrap();
    let ratio = w["ratio"].as_f64().unwrap();
    // Every frame is a common key frame: one base copy of 8 frames plus
    // four first frames stand in for 40 frames, at a visible fidelity cost.
    assert!(ratio > 1.0 && ratio < 40.0 / 12.0, "{ratio}");
    assert!(w["min_similarity"].as_f64().unwrap() < 0.99);
    assert_eq!(w["breakdown"]["extra_frames"], 0);
    assert_eq!(
        run(p, &["codec", "--redundancy", "0.1,0.2"]).status.code(),
        Some(1)
    );
}

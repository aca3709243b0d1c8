use serde::{Deserialize, Serialize};

use crate::defaults;

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub t_per_step: f64,
    pub total_steps: u32,
    pub t_lookup: f64,
    pub t_extract: f64,
    pub t_stitch: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            t_per_step: defaults::SECS_PER_STEP,
            total_steps: defaults::TOTAL_STEPS,
            t_lookup: defaults::LOOKUP_SECS,
            t_extract: defaults::EXTRACT_SECS,
            t_stitch: defaults::STITCH_SECS,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), EngineError> {
        let all = [
            self.t_per_step,
            self.t_lookup,
            self.t_extract,
            self.t_stitch,
        ];
        if all.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(EngineError::Config(
                "latency constants must be finite and non-negative".into(),
            ));
        }
        if self.total_steps < 25 {
            return Err(EngineError::Config(
                "total_steps must be at least 25".into(),
            ));
        }
        Ok(())
    }

    /// End-to-end seconds for one request that skips `skipped` steps.
    pub fn latency(&self, skipped: u32, stitched: bool) -> f64 {
        let stitch = if stitched { self.t_stitch } else { 0.0 };
        self.t_extract
            + self.t_lookup
            + stitch
            + self.t_per_step * f64::from(self.total_steps - skipped)
    }

    /// Generation time without any cache.
    pub fn full_generation(&self) -> f64 {
        self.t_per_step * f64::from(self.total_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingModel {
    /// Dollars per GPU hour.
    pub gpu_rate: f64,
    /// Dollars per GB-month. No default is assumed.
    pub storage_rate: Option<f64>,
    /// Provisioned cache storage in GB; the cache capacity when unset.
    pub provisioned_gb: Option<f64>,
}

impl Default for PricingModel {
    fn default() -> Self {
        Self {
            gpu_rate: defaults::GPU_DOLLARS_PER_HOUR,
            storage_rate: None,
            provisioned_gb: None,
        }
    }
}

impl PricingModel {
    pub fn validate(&self) -> Result<(), EngineError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.gpu_rate)
            || !self.storage_rate.is_none_or(ok)
            || !self.provisioned_gb.is_none_or(ok)
        {
            return Err(EngineError::Config(
                "prices must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Skipped-step values tracked by the histogram.
pub const SKIP_BUCKETS: [u32; 6] = [0, 5, 10, 15, 20, 25];

/// Aggregates over one window of consecutive requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub requests: u64,
    pub hits: u64,
    pub skipped_steps: u64,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub requests: u64,
    pub whole_hits: u64,
    pub decoupled_hits: u64,
    pub misses: u64,
    /// Counts for 0, 5, 10, 15, 20 and 25 skipped steps.
    pub skipped_histogram: [u64; 6],
    pub skipped_steps: u64,
    pub simulated_time: f64,
    pub insertions: u64,
    pub insert_refused: u64,
    pub evictions: u64,
    pub window_size: u64,
    pub windows: Vec<Window>,
}

impl Metrics {
    pub fn new(window_size: u64) -> Self {
        Self {
            requests: 0,
            whole_hits: 0,
            decoupled_hits: 0,
            misses: 0,
            skipped_histogram: [0; 6],
            skipped_steps: 0,
            simulated_time: 0.0,
            insertions: 0,
            insert_refused: 0,
            evictions: 0,
            window_size: window_size.max(1),
            windows: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, skipped: u32, latency: f64, hit: bool) {
        let bucket = SKIP_BUCKETS
            .iter()
            .position(|&b| b == skipped)
            .expect("skips are multiples of five up to 25");
        self.skipped_histogram[bucket] += 1;
        self.requests += 1;
        self.skipped_steps += u64::from(skipped);
        self.simulated_time += latency;
        if self
            .windows
            .last()
            .is_none_or(|w| w.requests == self.window_size)
        {
            self.windows.push(Window::default());
        }
        let w = self.windows.last_mut().expect("pushed above");
        w.requests += 1;
        w.hits += u64::from(hit);
        w.skipped_steps += u64::from(skipped);
        w.latency_secs += latency;
    }

    pub fn hits(&self) -> u64 {
        self.whole_hits + self.decoupled_hits
    }

    pub fn hit_rate(&self) -> f64 {
        self.hits() as f64 / self.requests.max(1) as f64
    }

    /// Skipped steps over the steps that would run without a cache.
    pub fn computation_savings(&self, total_steps: u32) -> f64 {
        self.skipped_steps as f64 / (f64::from(total_steps) * self.requests.max(1) as f64)
    }

    pub fn mean_latency(&self) -> Option<f64> {
        (self.requests > 0).then(|| self.simulated_time / self.requests as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub requests: u64,
    pub hit_rate: f64,
    pub computation_savings: f64,
    pub mean_latency_secs: f64,
    pub throughput_vs_nocache: f64,
    pub gpu_cost_per_video: f64,
    /// Absent when no storage price is configured.
    pub storage_cost_per_video: Option<f64>,
    pub cost_per_video: f64,
    /// Throughput ratio of each metrics window.
    pub rolling_throughput: Vec<f64>,
}

/// Turns run metrics into throughput and per-video costs.
pub fn report(
    metrics: &Metrics,
    latency: &LatencyModel,
    pricing: &PricingModel,
    capacity_bytes: u64,
) -> Result<CostReport, EngineError> {
    let mean = metrics.mean_latency().ok_or(EngineError::NoRequests)?;
    let gpu = pricing.gpu_rate * mean / 3600.0;
    let storage = pricing.storage_rate.map(|rate| {
        let gb = pricing
            .provisioned_gb
            .unwrap_or(capacity_bytes as f64 / 1e9);
        let videos_per_month = defaults::SECS_PER_MONTH / mean;
        gb * rate / videos_per_month
    });
    Ok(CostReport {
        requests: metrics.requests,
        hit_rate: metrics.hit_rate(),
        computation_savings: metrics.computation_savings(latency.total_steps),
        mean_latency_secs: mean,
        throughput_vs_nocache: latency.full_generation() / mean,
        gpu_cost_per_video: gpu,
        storage_cost_per_video: storage,
        cost_per_video: gpu + storage.unwrap_or(0.0),
        rolling_throughput: metrics
            .windows
            .iter()
            .map(|w| latency.full_generation() * w.requests as f64 / w.latency_secs)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_arithmetic() {
        let m = LatencyModel::default();
        assert!((m.latency(0, false) - 245.74).abs() < 1e-9);
        assert!((m.latency(25, false) - 124.74).abs() < 1e-9);
        let stitched = LatencyModel { t_stitch: 0.5, ..m };
        assert!((stitched.latency(25, true) - 125.24).abs() < 1e-9);
        assert!((stitched.latency(25, false) - 124.74).abs() < 1e-9);
    }

    #[test]
    fn cost_of_one_miss() {
        let mut metrics = Metrics::new(1000);
        let m = LatencyModel::default();
        metrics.record(0, m.latency(0, false), false);
        let r = report(&metrics, &m, &PricingModel::default(), 0).unwrap();
        assert!((r.gpu_cost_per_video - 0.2505).abs() < 5e-5);
        assert_eq!(r.storage_cost_per_video, None);
        assert!((r.throughput_vs_nocache - 242.0 / 245.74).abs() < 1e-12);

        let priced = PricingModel {
            storage_rate: Some(0.02),
            provisioned_gb: Some(100.0),
            ..PricingModel::default()
        };
        let r = report(&metrics, &m, &priced, 0).unwrap();
        let expected = 100.0 * 0.02 * 245.74 / (30.0 * 24.0 * 3600.0);
        assert!((r.storage_cost_per_video.unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn empty_run_has_no_report() {
        let r = report(
            &Metrics::new(10),
            &LatencyModel::default(),
            &PricingModel::default(),
            0,
        );
        assert!(matches!(r, Err(EngineError::NoRequests)));
    }

    #[test]
    fn windows_split_every_n_requests() {
        let mut metrics = Metrics::new(2);
        for skipped in [0, 5, 10, 25, 25] {
            metrics.record(skipped, 1.0, skipped > 0);
        }
        assert_eq!(metrics.windows.len(), 3);
        assert_eq!(metrics.windows[1].skipped_steps, 35);
        assert_eq!(metrics.skipped_histogram, [1, 1, 1, 0, 0, 2]);
        assert_eq!(
            metrics.skipped_histogram.iter().sum::<u64>(),
            metrics.requests
        );
    }
}

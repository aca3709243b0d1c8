//! Default constants. Every number the simulator takes from measured
//! hardware or published settings lives here.

/// Latent frames per video (a 4 s, 64-frame generation).
pub const LATENT_FRAMES: usize = 64;
/// Latent height: 320 px downscaled 8x.
pub const LATENT_HEIGHT: usize = 40;
/// Latent width: 512 px downscaled 8x.
pub const LATENT_WIDTH: usize = 64;
pub const LATENT_CHANNELS: usize = 4;

/// Embedding dimension of the text encoder being simulated.
pub const EMBED_DIM: usize = 512;

/// Denoising steps of a full generation.
pub const TOTAL_STEPS: u32 = 50;
/// Steps whose latents are cached.
pub const CACHED_STEPS: [u32; 5] = [5, 10, 15, 20, 25];

/// Minimum combined similarity for a cache hit.
pub const HIT_THRESHOLD: f64 = 0.65;
/// Frame similarity at or above which a frame is redundant.
pub const COMPRESS_THRESHOLD: f64 = 0.99;

/// Lower edges of the score-to-step bins, paired with `CACHED_STEPS`.
pub const STEP_BIN_EDGES: [f64; 5] = [0.65, 0.72, 0.79, 0.86, 0.93];

/// Full 50-step generation on an A100: 242 s.
pub const FULL_GENERATION_SECS: f64 = 242.0;
/// Seconds per denoising step, 242 / 50.
pub const SECS_PER_STEP: f64 = FULL_GENERATION_SECS / TOTAL_STEPS as f64;
/// Mean vector-database lookup latency.
pub const LOOKUP_SECS: f64 = 0.14;
/// Mean object/background text extraction latency.
pub const EXTRACT_SECS: f64 = 3.6;
/// Stitching is not broken out in the measured latency profile.
pub const STITCH_SECS: f64 = 0.0;

/// a2-highgpu-1g on-demand price, dollars per hour.
pub const GPU_DOLLARS_PER_HOUR: f64 = 3.67;

/// Seconds in the 30-day month used by the cost model.
pub const SECS_PER_MONTH: f64 = 30.0 * 24.0 * 3600.0;

/// Intra-step redundant-frame fractions for steps 5..25 in the synthetic
/// latent generator; later steps carry more detail and less redundancy.
pub const REDUNDANCY_BY_STEP: [f64; 5] = [0.9, 0.8, 0.6, 0.4, 0.25];
/// Differential scale of each cached step relative to step 5.
pub const ALPHA_SCHEDULE: [f64; 5] = [1.0, 0.9, 0.8, 0.7, 0.6];
/// Relative Gaussian noise added to synthetic differentials.
pub const DIFF_NOISE_SIGMA: f64 = 0.01;

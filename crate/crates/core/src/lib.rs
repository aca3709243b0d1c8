//! Approximate caching of video-diffusion latents.
//!
//! The crate holds everything needed to replay a request trace against a
//! capacity-bounded latent cache: the latent [`codec`], the three-table
//! similarity index ([`vindex`]), the cache [`store`] with its replacement
//! policies, mask-based latent [`stitcher`], the request pipeline and its
//! latency/cost models ([`engine`]), and a synthetic workload and latent
//! generator ([`simgen`]).

pub mod codec;
pub mod defaults;
pub mod engine;
pub mod latent;
pub mod simgen;
pub mod similarity;
pub mod stitcher;
pub mod store;
pub mod vindex;
mod wire;

pub use latent::{
    Bitmap, Embedding, EmbeddingKind, Frame, FrameShape, LatentShape, LatentState, MaskSet,
    PromptId, ShapeError, StepId,
};
pub use similarity::{cosine_similarity, frame_similarity, SimilarityError};
pub use wire::DecodeError;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/codec.md")]
    mod codec {}
    #[doc = include_str!("../../../book/src/lookup.md")]
    mod lookup {}
    #[doc = include_str!("../../../book/src/store.md")]
    mod store {}
    #[doc = include_str!("../../../book/src/stitching.md")]
    mod stitching {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

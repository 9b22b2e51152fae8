//! Mixture of pre-processing experts for noise-robust inference.
//!
//! A gating network scores incoming images as clean or noisy and routes each
//! one through exactly one pre-processing expert (identity, 3x3 average
//! filter, or an adversarially trained denoising autoencoder) before a
//! downstream task network sees it. This crate contains the tensor kernels
//! with hand-written backward passes, the layer-graph runtime, the four
//! network definitions, the distortion/augmentation pipeline, the training
//! objectives, the router, a parameter/FLOP analyzer and the evaluation
//! metrics.

pub mod complexity;
pub mod distortion;
pub mod error;
pub mod evalkit;
pub mod graph;
pub mod models;
pub mod ppm;
pub mod router;
pub mod synth;
pub mod tensor;
pub mod training;
pub mod weights;

pub use error::{MopeError, Result};
pub use tensor::{Shape, Tensor};

/// Deterministic generator used everywhere randomness is needed.
///
/// ChaCha8 keeps seeded streams identical across platforms and runs, which
/// the reproducibility guarantees lean on.
pub type MopeRng = rand_chacha::ChaCha8Rng;

/// Seed a generator.
pub fn rng_from_seed(seed: u64) -> MopeRng {
    use rand::SeedableRng;
    MopeRng::seed_from_u64(seed)
}

/// Seed a generator for a worker derived from a base seed.
pub fn worker_rng(base_seed: u64, worker: u64) -> MopeRng {
    rng_from_seed(base_seed.wrapping_add(worker))
}

//! The noise function F and the low-resolution augmentation pipeline.
//!
//! Per training draw one base image is picked uniformly among the clean
//! image and its low-resolution round trips, then Gaussian noise with a
//! sigma drawn from [0, max_sigma] is added to produce the noisy
//! counterpart. Noise is sampled independently per channel.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MopeError, Result};
use crate::tensor::{resize, ResizeMode, Tensor};
use crate::MopeRng;

/// Augmentation parameters.
#[derive(Debug, Clone)]
pub struct DistortionConfig {
    /// Largest noise standard deviation, drawn uniformly from [0, max_sigma].
    pub max_sigma: f32,
    /// Downsampling factors for the low-resolution branch.
    pub lowres_factors: Vec<usize>,
    pub seed: u64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        DistortionConfig {
            max_sigma: 0.15,
            lowres_factors: vec![2, 4],
            seed: 0,
        }
    }
}

/// y = clip(x + n, 0, 1) with n ~ N(0, sigma^2), i.i.d. per pixel and
/// channel. sigma = 0 returns the input bit-exactly.
pub fn add_gaussian_noise(x: &Tensor, sigma: f32, rng: &mut MopeRng) -> Result<Tensor> {
    if sigma < 0.0 {
        return Err(MopeError::InvalidArgument(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0f32, sigma)
        .map_err(|e| MopeError::InvalidArgument(format!("bad sigma {sigma}: {e}")))?;
    let data = x
        .data()
        .iter()
        .map(|&v| (v + normal.sample(rng)).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Bilinear downsample by `factor` then bilinear upsample back; simulates a
/// reduced-resolution sensor readout. `factor` must divide both sides.
pub fn lowres_roundtrip(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(MopeError::InvalidArgument("factor must be >= 1".into()));
    }
    let s = x.shape();
    if !s.h.is_multiple_of(factor) || !s.w.is_multiple_of(factor) {
        return Err(MopeError::InvalidArgument(format!(
            "factor {factor} does not divide image size {}x{}",
            s.h, s.w
        )));
    }
    let small = resize(x, s.h / factor, s.w / factor, ResizeMode::Bilinear)?;
    resize(&small, s.h, s.w, ResizeMode::Bilinear)
}

/// One augmentation draw: (base, noisy, sigma).
///
/// The base is the clean image or one of its low-resolution round trips,
/// picked uniformly; the noisy counterpart adds Gaussian noise with
/// sigma ~ U[0, max_sigma]. Both belong in the training batch.
pub fn sample_training_pair(
    clean: &Tensor,
    cfg: &DistortionConfig,
    rng: &mut MopeRng,
) -> Result<(Tensor, Tensor, f32)> {
    let choices = cfg.lowres_factors.len() + 1;
    let pick = rng.random_range(0..choices);
    let base = if pick == 0 {
        clean.clone()
    } else {
        lowres_roundtrip(clean, cfg.lowres_factors[pick - 1])?
    };
    let sigma = rng.random_range(0.0..=cfg.max_sigma);
    let noisy = add_gaussian_noise(&base, sigma, rng)?;
    Ok((base, noisy, sigma))
}

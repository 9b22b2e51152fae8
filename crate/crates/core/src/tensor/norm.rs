//! Instance normalization: each (sample, channel) plane is standardized to
//! zero mean and unit variance before the per-channel affine.

use super::{Shape, Tensor};
use crate::error::{MopeError, Result};

#[derive(Debug, Clone)]
pub struct InstanceNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

fn check(input: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<()> {
    let c = input.shape().c;
    if gamma.len() != c {
        return Err(MopeError::Shape(format!(
            "instance_norm: gamma has {} entries for {} channels",
            gamma.len(),
            c
        )));
    }
    if beta.len() != c {
        return Err(MopeError::Shape(format!(
            "instance_norm: beta has {} entries for {} channels",
            beta.len(),
            c
        )));
    }
    if eps <= 0.0 {
        return Err(MopeError::InvalidArgument(format!(
            "instance_norm: eps must be positive, got {eps}"
        )));
    }
    Ok(())
}

fn plane_stats(plane: &[f32]) -> (f32, f32) {
    let m = plane.len() as f64;
    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / m;
    let var = plane
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / m;
    (mean as f32, var as f32)
}

pub fn instance_norm(input: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    check(input, gamma, beta, eps)?;
    let Shape { n, c, .. } = input.shape();
    let mut out = Tensor::zeros(input.shape());
    for ni in 0..n {
        for ci in 0..c {
            let plane = input.plane(ni, ci);
            let (mean, var) = plane_stats(plane);
            let istd = 1.0 / (var + eps).sqrt();
            let (g, b) = (gamma[ci], beta[ci]);
            for (o, &v) in out.plane_mut(ni, ci).iter_mut().zip(plane) {
                *o = (v - mean) * istd * g + b;
            }
        }
    }
    Ok(out)
}

pub fn instance_norm_backward(
    input: &Tensor,
    gamma: &[f32],
    eps: f32,
    grad_out: &Tensor,
) -> Result<InstanceNormGrads> {
    if input.shape() != grad_out.shape() {
        return Err(MopeError::Shape(format!(
            "instance_norm backward: input {} vs grad {}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let Shape { n, c, h, w } = input.shape();
    check(input, gamma, &vec![0.0; c], eps)?;
    let m = (h * w) as f32;
    let mut gin = Tensor::zeros(input.shape());
    let mut ggamma = vec![0.0f32; c];
    let mut gbeta = vec![0.0f32; c];
    for ni in 0..n {
        for ci in 0..c {
            let plane = input.plane(ni, ci);
            let gplane = grad_out.plane(ni, ci);
            let (mean, var) = plane_stats(plane);
            let istd = 1.0 / (var + eps).sqrt();
            // accumulate the two plane-wide reductions the gradient needs
            let mut sum_g = 0.0f64;
            let mut sum_gx = 0.0f64;
            for (&g, &v) in gplane.iter().zip(plane) {
                let xhat = (v - mean) * istd;
                sum_g += g as f64;
                sum_gx += (g * xhat) as f64;
            }
            gbeta[ci] += sum_g as f32;
            ggamma[ci] += sum_gx as f32;
            let mean_g = (sum_g / m as f64) as f32;
            let mean_gx = (sum_gx / m as f64) as f32;
            let gam = gamma[ci];
            for ((o, &g), &v) in gin
                .plane_mut(ni, ci)
                .iter_mut()
                .zip(gplane)
                .zip(plane)
            {
                let xhat = (v - mean) * istd;
                *o = gam * istd * (g - mean_g - xhat * mean_gx);
            }
        }
    }
    Ok(InstanceNormGrads {
        input: gin,
        gamma: ggamma,
        beta: gbeta,
    })
}

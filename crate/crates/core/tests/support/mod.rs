//! Shared test oracles: nested-loop convolution references and central
//! finite-difference gradient checking. Everything here is independent of
//! the optimized kernels it verifies.

#![allow(dead_code)]

pub mod gradsuite;

use mope_core::graph::ParamStore;
use mope_core::tensor::{ConvParams, Shape, Tensor};
use mope_core::MopeRng;
use rand::Rng;

/// Direct quadruple-nested-loop cross-correlation, accumulating at f64.
pub fn reference_conv2d(input: &Tensor, p: &ConvParams) -> Tensor {
    let ws = p.weight.shape();
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let is = input.shape();
    let h_out = (is.h + 2 * p.pad - k) / p.stride + 1;
    let w_out = (is.w + 2 * p.pad - k) / p.stride + 1;
    let mut out = Tensor::zeros(Shape::new(is.n, c_out, h_out, w_out));
    for n in 0..is.n {
        for co in 0..c_out {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut acc = p.bias[co] as f64;
                    for ci in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                                let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                                if iy >= 0 && iy < is.h as isize && ix >= 0 && ix < is.w as isize {
                                    acc += input.at(n, ci, iy as usize, ix as usize) as f64
                                        * p.weight.at(co, ci, ky, kx) as f64;
                                }
                            }
                        }
                    }
                    *out.at_mut(n, co, oy, ox) = acc as f32;
                }
            }
        }
    }
    out
}

/// Direct scatter-loop transposed convolution (weight laid out
/// (c_in, c_out, k, k)), accumulating at f64.
pub fn reference_conv_transpose2d(input: &Tensor, p: &ConvParams, out_pad: usize) -> Tensor {
    let ws = p.weight.shape();
    let (c_in, c_out, k) = (ws.n, ws.c, ws.h);
    let is = input.shape();
    let h_out = (is.h - 1) * p.stride + k + out_pad - 2 * p.pad;
    let w_out = (is.w - 1) * p.stride + k + out_pad - 2 * p.pad;
    let mut acc = vec![0.0f64; is.n * c_out * h_out * w_out];
    for n in 0..is.n {
        for ci in 0..c_in {
            for iy in 0..is.h {
                for ix in 0..is.w {
                    let v = input.at(n, ci, iy, ix) as f64;
                    for co in 0..c_out {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (iy * p.stride + ky) as isize - p.pad as isize;
                                let ox = (ix * p.stride + kx) as isize - p.pad as isize;
                                if oy >= 0
                                    && oy < h_out as isize
                                    && ox >= 0
                                    && ox < w_out as isize
                                {
                                    let idx = ((n * c_out + co) * h_out + oy as usize) * w_out
                                        + ox as usize;
                                    acc[idx] += v * p.weight.at(ci, co, ky, kx) as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = Tensor::zeros(Shape::new(is.n, c_out, h_out, w_out));
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        let co = (i / (h_out * w_out)) % c_out;
        *o = (acc[i] + p.bias[co] as f64) as f32;
    }
    out
}

pub fn rand_tensor(shape: Shape, rng: &mut MopeRng, lo: f32, hi: f32) -> Tensor {
    let data = (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Random projection with entries of magnitude in [0.5, 1.5]; dotting the
/// network output with it gives a scalar loss with healthy gradients.
pub fn rand_projection(shape: Shape, rng: &mut MopeRng) -> Tensor {
    let data = (0..shape.numel())
        .map(|_| {
            let mag = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// f64 dot of an output tensor with a projection.
pub fn proj_loss(output: &Tensor, proj: &Tensor) -> f64 {
    output
        .data()
        .iter()
        .zip(proj.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Probe step for operators that are linear in the probed argument (conv
/// and friends): central differences are exact there, so a wide step only
/// reduces f32 quantization noise.
pub const FD_STEP_LINEAR: f32 = 1e-2;
/// Probe step for nonlinear losses through full networks.
pub const FD_STEP: f32 = 5e-3;
pub const FD_TOLERANCE: f64 = 1e-3;
const REL_FLOOR: f64 = 0.05;
/// A probe interval counts as smooth when the h and h/2 estimates agree
/// this closely. Kink-straddling intervals (the rectifiers are only
/// piecewise linear) fail the gate and are resampled; the gate never looks
/// at the analytic value, so a wrong backward pass cannot hide behind it.
const SMOOTHNESS_TOL: f64 = 1e-3;
const MAX_RESAMPLE_FACTOR: usize = 20;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// One central-difference probe of a scalar function along coordinate
/// perturbations supplied by `eval_at`. Returns None when the interval is
/// not smooth enough for the difference quotient to be meaningful.
fn central_difference(eval_at: &mut dyn FnMut(f32) -> f64, step: f32) -> Option<f64> {
    let full = (eval_at(step) - eval_at(-step)) / (2.0 * step as f64);
    let half = (eval_at(step / 2.0) - eval_at(-step / 2.0)) / (step as f64);
    if rel_err(full, half) > SMOOTHNESS_TOL {
        return None;
    }
    Some(half)
}

/// Check `analytic` gradients of `loss` with respect to `probes` randomly
/// chosen coordinates of a tensor. Returns the worst relative error.
pub fn fd_check_tensor(
    loss: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    analytic: &Tensor,
    probes: usize,
    step: f32,
    rng: &mut MopeRng,
) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < probes {
        attempts += 1;
        assert!(
            attempts <= probes * MAX_RESAMPLE_FACTOR,
            "too many kink-straddling probes; only {accepted}/{probes} accepted"
        );
        let i = rng.random_range(0..x.numel());
        let numeric = central_difference(
            &mut |delta| {
                let mut probe = x.clone();
                probe.data_mut()[i] += delta;
                loss(&probe)
            },
            step,
        );
        if let Some(numeric) = numeric {
            worst = worst.max(rel_err(analytic.data()[i] as f64, numeric));
            accepted += 1;
        }
    }
    worst
}

/// As `fd_check_tensor`, over randomly chosen parameter coordinates of a
/// store. Every entry of the store gets at least one probe.
pub fn fd_check_params(
    loss: &mut dyn FnMut(&ParamStore) -> f64,
    params: &ParamStore,
    analytic: &ParamStore,
    probes: usize,
    step: f32,
    rng: &mut MopeRng,
) -> f64 {
    let keys: Vec<_> = params.iter().map(|(k, _)| *k).collect();
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < probes {
        attempts += 1;
        assert!(
            attempts <= probes * MAX_RESAMPLE_FACTOR,
            "too many kink-straddling probes; only {accepted}/{probes} accepted"
        );
        let key = if accepted < keys.len() && attempts == accepted + 1 {
            keys[accepted]
        } else {
            keys[rng.random_range(0..keys.len())]
        };
        let tensor = params.get(key).unwrap();
        let i = rng.random_range(0..tensor.numel());
        let numeric = central_difference(
            &mut |delta| {
                let mut probe = params.clone();
                probe.get_mut(key).unwrap().data_mut()[i] += delta;
                loss(&probe)
            },
            step,
        );
        if let Some(numeric) = numeric {
            let ana = analytic.get(key).unwrap().data()[i] as f64;
            worst = worst.max(rel_err(ana, numeric));
            accepted += 1;
        }
    }
    worst
}

//! 2-D convolution and transposed convolution, forward and backward.
//!
//! Convolution uses the cross-correlation convention (no kernel flip). The
//! kernels run as im2col plus an axpy-structured accumulation so the inner
//! loops stay contiguous and vectorize.

use super::{axpy, dot, Shape, Tensor};
use crate::error::{MopeError, Result};

/// Parameters of a convolution layer.
///
/// For `conv2d` the weight is laid out (c_out, c_in, k, k) and the bias has
/// length c_out. For the transposed ops the same tensor is read with its
/// first axis as the *input* channel count and the second as the output, so
/// one weight tensor serves both sides of the conv/conv-transpose duality.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Vec<f32>, stride: usize, pad: usize) -> Result<Self> {
        let s = weight.shape();
        if s.h != s.w {
            return Err(MopeError::Shape(format!(
                "kernel must be square, got {}x{}",
                s.h, s.w
            )));
        }
        if s.h.is_multiple_of(2) {
            return Err(MopeError::Shape(format!("kernel size {} must be odd", s.h)));
        }
        if stride == 0 {
            return Err(MopeError::InvalidArgument("stride must be >= 1".into()));
        }
        Ok(ConvParams {
            weight,
            bias,
            stride,
            pad,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }
}

/// Gradients returned by `conv2d_backward`.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

/// Gradients returned by the transposed-convolution backward pass.
pub type TransposeGrads = ConvGrads;

fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Gather one sample into an (c_in*k*k, h_out*w_out) patch matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &Tensor,
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
    col: &mut [f32],
) {
    let Shape { h, w, c, .. } = input.shape();
    let s_len = h_out * w_out;
    let mut r = 0;
    for ci in 0..c {
        let plane = input.plane(n, ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[r * s_len..(r + 1) * s_len];
                let base_x = kx as isize - pad as isize;
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let seg = &mut row[oy * w_out..(oy + 1) * w_out];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..iy as usize * w + w];
                    copy_strided(seg, src, base_x, stride, w, w_out);
                }
                r += 1;
            }
        }
    }
}

/// seg[ox] = src[ox*stride + base] where in range, else 0.
#[inline]
fn copy_strided(seg: &mut [f32], src: &[f32], base: isize, stride: usize, w: usize, w_out: usize) {
    let lo = if base >= 0 {
        0
    } else {
        ((-base) as usize).div_ceil(stride)
    };
    let hi_num = w as isize - 1 - base;
    if hi_num < 0 || lo >= w_out {
        seg.fill(0.0);
        return;
    }
    let hi = ((hi_num as usize) / stride).min(w_out - 1);
    seg[..lo].fill(0.0);
    if stride == 1 {
        let start = (lo as isize + base) as usize;
        seg[lo..=hi].copy_from_slice(&src[start..start + (hi - lo + 1)]);
    } else {
        for (ox, v) in seg.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *v = src[((ox * stride) as isize + base) as usize];
        }
    }
    if hi + 1 < w_out {
        seg[hi + 1..].fill(0.0);
    }
}

/// Scatter-add a patch matrix back onto one sample of `out`.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    col: &[f32],
    out: &mut Tensor,
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
) {
    let Shape { h, w, c, .. } = out.shape();
    let s_len = h_out * w_out;
    let mut r = 0;
    for ci in 0..c {
        let plane = out.plane_mut(n, ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[r * s_len..(r + 1) * s_len];
                let base_x = kx as isize - pad as isize;
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..iy as usize * w + w];
                    let seg = &row[oy * w_out..(oy + 1) * w_out];
                    for (ox, &g) in seg.iter().enumerate() {
                        let ix = (ox * stride) as isize + base_x;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// Plain convolution: out = weight (*) input + bias.
fn conv_core(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let ws = weight.shape();
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let is = input.shape();
    if is.c != c_in {
        return Err(MopeError::Shape(format!(
            "conv2d: input has {} channels, weight expects {}",
            is.c, c_in
        )));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(MopeError::Shape(format!(
                "conv2d: bias has {} entries, weight produces {} channels",
                b.len(),
                c_out
            )));
        }
    }
    let h_out = conv_out_size(is.h, k, stride, pad).ok_or_else(|| {
        MopeError::Shape(format!(
            "conv2d: height {} too small for kernel {} with pad {}",
            is.h, k, pad
        ))
    })?;
    let w_out = conv_out_size(is.w, k, stride, pad).ok_or_else(|| {
        MopeError::Shape(format!(
            "conv2d: width {} too small for kernel {} with pad {}",
            is.w, k, pad
        ))
    })?;

    let ckk = c_in * k * k;
    let s_len = h_out * w_out;
    let mut col = vec![0.0f32; ckk * s_len];
    let mut out = Tensor::zeros(Shape::new(is.n, c_out, h_out, w_out));
    let wdata = weight.data();
    for n in 0..is.n {
        im2col(input, n, k, stride, pad, h_out, w_out, &mut col);
        for co in 0..c_out {
            let plane = out.plane_mut(n, co);
            if let Some(b) = bias {
                plane.fill(b[co]);
            }
            let wrow = &wdata[co * ckk..(co + 1) * ckk];
            for (r, &wv) in wrow.iter().enumerate() {
                axpy(plane, wv, &col[r * s_len..(r + 1) * s_len]);
            }
        }
    }
    Ok(out)
}

/// Adjoint of `conv_core` with respect to its input: maps a (n, c_out, ...)
/// tensor back to the (n, c_in, h_in, w_in) domain.
fn backward_data(
    gout: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
    h_in: usize,
    w_in: usize,
) -> Result<Tensor> {
    let ws = weight.shape();
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let gs = gout.shape();
    if gs.c != c_out {
        return Err(MopeError::Shape(format!(
            "backward-data: gradient has {} channels, weight expects {}",
            gs.c, c_out
        )));
    }
    let ckk = c_in * k * k;
    let s_len = gs.h * gs.w;
    let mut gcol = vec![0.0f32; ckk * s_len];
    let mut gin = Tensor::zeros(Shape::new(gs.n, c_in, h_in, w_in));
    let wdata = weight.data();
    for n in 0..gs.n {
        gcol.fill(0.0);
        for co in 0..c_out {
            let gplane = gout.plane(n, co);
            let wrow = &wdata[co * ckk..(co + 1) * ckk];
            for (r, &wv) in wrow.iter().enumerate() {
                axpy(&mut gcol[r * s_len..(r + 1) * s_len], wv, gplane);
            }
        }
        col2im_add(&gcol, &mut gin, n, k, stride, pad, gs.h, gs.w);
    }
    Ok(gin)
}

/// Accumulate the weight gradient: gw[co][r] += <gy[n,co], col_r(x[n])>.
fn weight_grad(x: &Tensor, gy: &Tensor, k: usize, stride: usize, pad: usize, gw: &mut [f32]) {
    let xs = x.shape();
    let gs = gy.shape();
    let ckk = xs.c * k * k;
    let s_len = gs.h * gs.w;
    let mut col = vec![0.0f32; ckk * s_len];
    for n in 0..xs.n {
        im2col(x, n, k, stride, pad, gs.h, gs.w, &mut col);
        for co in 0..gs.c {
            let gplane = gy.plane(n, co);
            let grow = &mut gw[co * ckk..(co + 1) * ckk];
            for (r, gv) in grow.iter_mut().enumerate() {
                *gv += dot(gplane, &col[r * s_len..(r + 1) * s_len]);
            }
        }
    }
}

fn bias_grad(gy: &Tensor) -> Vec<f32> {
    let gs = gy.shape();
    let mut gb = vec![0.0f32; gs.c];
    for n in 0..gs.n {
        for (c, b) in gb.iter_mut().enumerate() {
            *b += gy.plane(n, c).iter().sum::<f32>();
        }
    }
    gb
}

/// Cross-correlation convolution of `input` with `p`.
pub fn conv2d(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    conv_core(input, &p.weight, Some(&p.bias), p.stride, p.pad)
}

/// Analytic gradients of `conv2d` with respect to input, weight and bias.
pub fn conv2d_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    let is = input.shape();
    let ws = p.weight.shape();
    let k = ws.h;
    if is.c != ws.c {
        return Err(MopeError::Shape(format!(
            "conv2d backward: input has {} channels, weight expects {}",
            is.c, ws.c
        )));
    }
    let h_out = conv_out_size(is.h, k, p.stride, p.pad);
    let w_out = conv_out_size(is.w, k, p.stride, p.pad);
    let gs = grad_out.shape();
    if Some(gs.h) != h_out || Some(gs.w) != w_out || gs.c != ws.n || gs.n != is.n {
        return Err(MopeError::Shape(format!(
            "conv2d backward: grad shape {} does not match forward output (n={}, c={}, h={:?}, w={:?})",
            gs, is.n, ws.n, h_out, w_out
        )));
    }
    let grad_input = backward_data(grad_out, &p.weight, p.stride, p.pad, is.h, is.w)?;
    let mut gw = vec![0.0f32; p.weight.numel()];
    weight_grad(input, grad_out, k, p.stride, p.pad, &mut gw);
    Ok(ConvGrads {
        input: grad_input,
        weight: Tensor::from_vec(ws, gw)?,
        bias: bias_grad(grad_out),
    })
}

pub(crate) fn transpose_out_size(
    input: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<usize> {
    let base = (input - 1) * stride + k + out_pad;
    if base <= 2 * pad {
        return Err(MopeError::Shape(format!(
            "conv_transpose2d: size {input} with kernel {k}, stride {stride}, pad {pad} yields an empty output"
        )));
    }
    Ok(base - 2 * pad)
}

/// Transposed convolution with extra rows/columns appended to the output
/// (needed to invert a stride-2 downsampling of an even size). `out_pad`
/// is (rows, columns).
pub fn conv_transpose2d_padded(
    input: &Tensor,
    p: &ConvParams,
    out_pad: (usize, usize),
) -> Result<Tensor> {
    let ws = p.weight.shape();
    let (c_in, c_out, k) = (ws.n, ws.c, ws.h);
    let is = input.shape();
    if is.c != c_in {
        return Err(MopeError::Shape(format!(
            "conv_transpose2d: input has {} channels, weight expects {}",
            is.c, c_in
        )));
    }
    if p.bias.len() != c_out {
        return Err(MopeError::Shape(format!(
            "conv_transpose2d: bias has {} entries, weight produces {} channels",
            p.bias.len(),
            c_out
        )));
    }
    if out_pad.0 >= p.stride || out_pad.1 >= p.stride {
        return Err(MopeError::InvalidArgument(format!(
            "output padding {:?} must be smaller than stride {}",
            out_pad, p.stride
        )));
    }
    let h_out = transpose_out_size(is.h, k, p.stride, p.pad, out_pad.0)?;
    let w_out = transpose_out_size(is.w, k, p.stride, p.pad, out_pad.1)?;
    let mut out = backward_data(input, &p.weight, p.stride, p.pad, h_out, w_out)?;
    for n in 0..is.n {
        for (co, &b) in p.bias.iter().enumerate() {
            for v in out.plane_mut(n, co) {
                *v += b;
            }
        }
    }
    Ok(out)
}

/// Transposed convolution; output spatial size is (h_in - 1)*stride - 2*pad + k.
///
/// With the weight tensor shared between the two ops this is exactly the
/// backward-data pass of `conv2d` (plus bias).
pub fn conv_transpose2d(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    conv_transpose2d_padded(input, p, (0, 0))
}

/// Gradients of `conv_transpose2d_padded`.
pub fn conv_transpose2d_backward_padded(
    input: &Tensor,
    p: &ConvParams,
    out_pad: (usize, usize),
    grad_out: &Tensor,
) -> Result<TransposeGrads> {
    let ws = p.weight.shape();
    let k = ws.h;
    let is = input.shape();
    let h_out = transpose_out_size(is.h, k, p.stride, p.pad, out_pad.0)?;
    let w_out = transpose_out_size(is.w, k, p.stride, p.pad, out_pad.1)?;
    let gs = grad_out.shape();
    if gs.n != is.n || gs.c != ws.c || gs.h != h_out || gs.w != w_out {
        return Err(MopeError::Shape(format!(
            "conv_transpose2d backward: grad shape {} does not match forward output (n={}, c={}, h={}, w={})",
            gs, is.n, ws.c, h_out, w_out
        )));
    }
    // The adjoint of the transposed conv is the plain conv with the same
    // weights; its output spatial size lands back on (h_in, w_in) because
    // out_pad < stride.
    let grad_input = conv_core(grad_out, &p.weight, None, p.stride, p.pad)?;
    debug_assert_eq!(grad_input.shape().h, is.h);
    let mut gw = vec![0.0f32; p.weight.numel()];
    weight_grad(grad_out, input, k, p.stride, p.pad, &mut gw);
    Ok(TransposeGrads {
        input: grad_input,
        weight: Tensor::from_vec(ws, gw)?,
        bias: bias_grad(grad_out),
    })
}

/// Gradients of `conv_transpose2d`.
pub fn conv_transpose2d_backward(
    input: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
) -> Result<TransposeGrads> {
    conv_transpose2d_backward_padded(input, p, (0, 0), grad_out)
}

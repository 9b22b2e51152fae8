//! Fixed (non-learnable) spatial operators: the 3x3 average filter and
//! nearest/bilinear resize.

use super::{Shape, Tensor};
use crate::error::{MopeError, Result};

/// Mirror an out-of-range index back into [0, n). -1 maps to 0 and n maps
/// to n-1, so a 1-pixel image reflects onto itself.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i - 1) as usize
    } else if i >= n as isize {
        2 * n - 1 - i as usize
    } else {
        i as usize
    }
}

/// Per-channel 3x3 mean with reflect padding; shape preserved.
pub fn box_filter3(input: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = input.shape();
    let mut out = Tensor::zeros(input.shape());
    for ni in 0..n {
        for ci in 0..c {
            let src = input.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for dy in -1..=1isize {
                        let sy = reflect(y as isize + dy, h);
                        for dx in -1..=1isize {
                            let sx = reflect(x as isize + dx, w);
                            acc += src[sy * w + sx];
                        }
                    }
                    dst[y * w + x] = acc / 9.0;
                }
            }
        }
    }
    out
}

/// Exact adjoint of `box_filter3`: each output gradient scatters 1/9 back
/// onto the nine (reflected) source pixels.
pub fn box_filter3_backward(grad_out: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = grad_out.shape();
    let mut gin = Tensor::zeros(grad_out.shape());
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.plane(ni, ci);
            let dst = gin.plane_mut(ni, ci);
            for y in 0..h {
                for x in 0..w {
                    let share = g[y * w + x] / 9.0;
                    for dy in -1..=1isize {
                        let sy = reflect(y as isize + dy, h);
                        for dx in -1..=1isize {
                            let sx = reflect(x as isize + dx, w);
                            dst[sy * w + sx] += share;
                        }
                    }
                }
            }
        }
    }
    gin
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    /// Source index floor(dst * in / out).
    Nearest,
    /// Pixel-center (align-corners-off) sampling.
    Bilinear,
}

/// Sample positions and weights for one output row/column axis.
fn bilinear_axis(out_i: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let src = (out_i as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    let src = src.clamp(0.0, (in_len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, (src - i0 as f64) as f32)
}

pub fn resize(input: &Tensor, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(MopeError::InvalidArgument(
            "resize: output size must be at least 1x1".into(),
        ));
    }
    let Shape { n, c, h, w } = input.shape();
    let mut out = Tensor::zeros(Shape::new(n, c, out_h, out_w));
    for ni in 0..n {
        for ci in 0..c {
            let src = input.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            match mode {
                ResizeMode::Nearest => {
                    for y in 0..out_h {
                        let sy = y * h / out_h;
                        for x in 0..out_w {
                            let sx = x * w / out_w;
                            dst[y * out_w + x] = src[sy * w + sx];
                        }
                    }
                }
                ResizeMode::Bilinear => {
                    for y in 0..out_h {
                        let (y0, y1, fy) = bilinear_axis(y, h, out_h);
                        for x in 0..out_w {
                            let (x0, x1, fx) = bilinear_axis(x, w, out_w);
                            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                            dst[y * out_w + x] = top * (1.0 - fy) + bot * fy;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of `resize` back onto an (in_h, in_w) grid.
pub fn resize_backward(
    grad_out: &Tensor,
    in_h: usize,
    in_w: usize,
    mode: ResizeMode,
) -> Tensor {
    let Shape { n, c, h, w } = grad_out.shape();
    let mut gin = Tensor::zeros(Shape::new(n, c, in_h, in_w));
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.plane(ni, ci);
            let dst = gin.plane_mut(ni, ci);
            match mode {
                ResizeMode::Nearest => {
                    for y in 0..h {
                        let sy = y * in_h / h;
                        for x in 0..w {
                            let sx = x * in_w / w;
                            dst[sy * in_w + sx] += g[y * w + x];
                        }
                    }
                }
                ResizeMode::Bilinear => {
                    for y in 0..h {
                        let (y0, y1, fy) = bilinear_axis(y, in_h, h);
                        for x in 0..w {
                            let (x0, x1, fx) = bilinear_axis(x, in_w, w);
                            let gv = g[y * w + x];
                            dst[y0 * in_w + x0] += gv * (1.0 - fx) * (1.0 - fy);
                            dst[y0 * in_w + x1] += gv * fx * (1.0 - fy);
                            dst[y1 * in_w + x0] += gv * (1.0 - fx) * fy;
                            dst[y1 * in_w + x1] += gv * fx * fy;
                        }
                    }
                }
            }
        }
    }
    gin
}

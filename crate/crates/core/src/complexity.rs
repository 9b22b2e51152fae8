//! Static analyzer over `NetworkSpec`: parameter counts and bytes, MACs,
//! FLOPs at a given input size, and receptive field.
//!
//! Counting convention (printed in every report header): convolutions cost
//! 2 FLOPs per multiply-accumulate, instance norm 2 FLOPs per element,
//! activations and skip-adds 1 FLOP per element, the 3x3 box filter 18
//! FLOPs per element, bilinear resize 8 per output element. MACs are
//! defined as FLOPs / 2 throughout, so the two totals always sit exactly a
//! factor of two apart.

use crate::error::{MopeError, Result};
use crate::graph::{LayerSpec, NetworkSpec};
use crate::tensor::ResizeMode;

pub const CONVENTION: &str =
    "conv 2 FLOPs/MAC; instance norm 2 FLOPs/elem; activation & skip-add 1 FLOP/elem; \
     box filter 18 FLOPs/elem; bilinear resize 8 FLOPs/out-elem; MAC = FLOP/2";

/// Bytes per parameter (32-bit floats).
pub const BYTES_PER_PARAM: usize = 4;

/// Budgets published for the original implementation of these two
/// architectures at a 244x244 input. The parameter megabytes are
/// convention-free and the reconstruction matches them within 2%; the ops
/// figures were produced under an unstated counting convention and are only
/// expected to agree within a small factor.
pub mod reference {
    pub const DENOISER_PARAM_MB: f64 = 0.187;
    pub const GATING_PARAM_MB: f64 = 0.096;
    pub const DENOISER_GFLOP: f64 = 0.171;
    pub const GATING_GFLOP: f64 = 0.034;
}

#[derive(Debug, Clone)]
pub struct ParamRow {
    pub layer: usize,
    pub name: String,
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub network: String,
    pub rows: Vec<ParamRow>,
    pub total: usize,
    pub total_bytes: usize,
}

impl ParamReport {
    pub fn megabytes(&self) -> f64 {
        self.total_bytes as f64 / 1e6
    }
}

#[derive(Debug, Clone)]
pub struct CostRow {
    pub layer: usize,
    pub name: String,
    pub params: usize,
    pub param_bytes: usize,
    pub flops: u64,
    pub macs: f64,
    /// (channels, height, width) leaving this layer.
    pub out_shape: (usize, usize, usize),
    pub receptive_field: usize,
}

#[derive(Debug, Clone)]
pub struct ComplexityReport {
    pub network: String,
    pub input_size: (usize, usize),
    pub rows: Vec<CostRow>,
    pub total_params: usize,
    pub total_param_bytes: usize,
    pub total_flops: u64,
    pub total_macs: f64,
}

impl ComplexityReport {
    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn gmacs(&self) -> f64 {
        self.total_macs / 1e9
    }

    pub fn param_megabytes(&self) -> f64 {
        self.total_param_bytes as f64 / 1e6
    }

    /// Human-readable per-layer table.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "network: {} @ {}x{}\nconvention: {}\n",
            self.network, self.input_size.0, self.input_size.1, CONVENTION
        ));
        out.push_str(&format!(
            "{:<4} {:<26} {:>9} {:>10} {:>14} {:>14} {:>14} {:>5}\n",
            "#", "layer", "params", "bytes", "MACs", "FLOPs", "out (c,h,w)", "RF"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<4} {:<26} {:>9} {:>10} {:>14.1} {:>14} {:>14} {:>5}\n",
                r.layer,
                r.name,
                r.params,
                r.param_bytes,
                r.macs,
                r.flops,
                format!("{}x{}x{}", r.out_shape.0, r.out_shape.1, r.out_shape.2),
                r.receptive_field,
            ));
        }
        out.push_str(&format!(
            "{:<4} {:<26} {:>9} {:>10} {:>14.1} {:>14}\n",
            "", "total", self.total_params, self.total_param_bytes, self.total_macs,
            self.total_flops,
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,name,params,param_bytes,macs,flops,out_c,out_h,out_w,receptive_field\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.layer,
                r.name,
                r.params,
                r.param_bytes,
                r.macs,
                r.flops,
                r.out_shape.0,
                r.out_shape.1,
                r.out_shape.2,
                r.receptive_field,
            ));
        }
        out.push_str(&format!(
            "total,,{},{},{},{},,,,\n",
            self.total_params, self.total_param_bytes, self.total_macs, self.total_flops
        ));
        out
    }
}

fn layer_params(layer: &LayerSpec) -> usize {
    match *layer {
        LayerSpec::Conv { in_ch, out_ch, kernel, .. }
        | LayerSpec::ConvTranspose { in_ch, out_ch, kernel, .. } => {
            in_ch * out_ch * kernel * kernel + out_ch
        }
        LayerSpec::InstanceNorm { channels } => 2 * channels,
        _ => 0,
    }
}

fn layer_name(layer: &LayerSpec) -> String {
    match *layer {
        LayerSpec::Conv { in_ch, out_ch, kernel, stride, .. } => {
            format!("conv{kernel}x{kernel} s{stride} {in_ch}->{out_ch}")
        }
        LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, .. } => {
            format!("convT{kernel}x{kernel} s{stride} {in_ch}->{out_ch}")
        }
        LayerSpec::InstanceNorm { channels } => format!("instance_norm {channels}"),
        LayerSpec::Activation(a) => format!("{a:?}").to_lowercase(),
        LayerSpec::BoxFilter => "box_filter3".into(),
        LayerSpec::Resize { out_h, out_w, .. } => format!("resize {out_h}x{out_w}"),
        LayerSpec::AddSkip { from } => format!("add_skip <-{from}"),
        LayerSpec::ConcatSkip { from } => format!("concat_skip <-{from}"),
        LayerSpec::GlobalAvgPool => "global_avg_pool".into(),
    }
}

/// Parameter count and byte size, per layer and total.
pub fn count_params(spec: &NetworkSpec) -> ParamReport {
    let rows: Vec<ParamRow> = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| ParamRow {
            layer: i,
            name: layer_name(l),
            params: layer_params(l),
        })
        .collect();
    let total = rows.iter().map(|r| r.params).sum();
    ParamReport {
        network: spec.name.clone(),
        rows,
        total,
        total_bytes: total * BYTES_PER_PARAM,
    }
}

/// Receptive field of one output unit: 1 + sum of (k-1) * jump, where jump
/// is the product of strides of all earlier layers. Transposed convs shrink
/// the jump by their stride; resize and pooling are ignored.
pub fn receptive_field(spec: &NetworkSpec) -> usize {
    let mut rf = 1.0f64;
    let mut jump = 1.0f64;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv { kernel, stride, .. } => {
                rf += (kernel - 1) as f64 * jump;
                jump *= stride as f64;
            }
            LayerSpec::ConvTranspose { kernel, stride, .. } => {
                jump /= stride as f64;
                rf += (kernel - 1) as f64 * jump;
            }
            LayerSpec::BoxFilter => {
                rf += 2.0 * jump;
            }
            _ => {}
        }
    }
    rf.round() as usize
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < k {
        return Err(MopeError::Shape(format!(
            "size {size} too small for kernel {k} with pad {pad}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Walk the spec at a given input size accumulating cost per layer.
pub fn count_flops(spec: &NetworkSpec, in_h: usize, in_w: usize) -> Result<ComplexityReport> {
    let mut rows = Vec::with_capacity(spec.layers.len());
    let mut c = spec.input_channels;
    let mut h = in_h;
    let mut w = in_w;
    let mut rf = 1.0f64;
    let mut jump = 1.0f64;
    // shapes after every layer, for skips and size matching
    let mut shapes: Vec<(usize, usize, usize)> = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        let flops: u64;
        match *layer {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, pad } => {
                debug_assert_eq!(in_ch, c);
                let oh = conv_out(h, kernel, stride, pad)?;
                let ow = conv_out(w, kernel, stride, pad)?;
                let macs = (kernel * kernel * in_ch * out_ch * oh * ow) as u64;
                flops = 2 * macs;
                rf += (kernel - 1) as f64 * jump;
                jump *= stride as f64;
                c = out_ch;
                h = oh;
                w = ow;
            }
            LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, pad, match_size_of } => {
                debug_assert_eq!(in_ch, c);
                let macs = (kernel * kernel * in_ch * out_ch * h * w) as u64;
                flops = 2 * macs;
                let base_h = (h - 1) * stride + kernel - 2 * pad;
                let base_w = (w - 1) * stride + kernel - 2 * pad;
                (h, w) = match match_size_of {
                    Some(j) => (shapes[j].1, shapes[j].2),
                    None => (base_h, base_w),
                };
                c = out_ch;
                jump /= stride as f64;
                rf += (kernel - 1) as f64 * jump;
            }
            LayerSpec::InstanceNorm { .. } => {
                flops = 2 * (c * h * w) as u64;
            }
            LayerSpec::Activation(_) => {
                flops = (c * h * w) as u64;
            }
            LayerSpec::BoxFilter => {
                flops = 18 * (c * h * w) as u64;
                rf += 2.0 * jump;
            }
            LayerSpec::Resize { out_h, out_w, mode } => {
                flops = match mode {
                    ResizeMode::Nearest => 0,
                    ResizeMode::Bilinear => 8 * (c * out_h * out_w) as u64,
                };
                h = out_h;
                w = out_w;
            }
            LayerSpec::AddSkip { .. } => {
                flops = (c * h * w) as u64;
            }
            LayerSpec::ConcatSkip { from } => {
                flops = 0;
                c += shapes[from].0;
            }
            LayerSpec::GlobalAvgPool => {
                flops = (c * h * w) as u64;
                h = 1;
                w = 1;
            }
        }
        shapes.push((c, h, w));
        let params = layer_params(layer);
        rows.push(CostRow {
            layer: idx,
            name: layer_name(layer),
            params,
            param_bytes: params * BYTES_PER_PARAM,
            flops,
            macs: flops as f64 / 2.0,
            out_shape: (c, h, w),
            receptive_field: rf.round() as usize,
        });
    }
    let total_params: usize = rows.iter().map(|r| r.params).sum();
    let total_flops: u64 = rows.iter().map(|r| r.flops).sum();
    Ok(ComplexityReport {
        network: spec.name.clone(),
        input_size: (in_h, in_w),
        rows,
        total_params,
        total_param_bytes: total_params * BYTES_PER_PARAM,
        total_flops,
        total_macs: total_flops as f64 / 2.0,
    })
}

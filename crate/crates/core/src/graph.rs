//! Layer-list network representation: validation, parameter storage,
//! initialization, forward execution with an activation tape, and the
//! matching backward sweep.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{MopeError, Result};
use crate::tensor::{
    activation, activation_backward, box_filter3, box_filter3_backward, concat_channels,
    concat_channels_backward, conv2d, conv2d_backward, conv_transpose2d_backward_padded,
    conv_transpose2d_padded, elementwise_add, instance_norm, instance_norm_backward, resize,
    resize_backward, Activation, ConvParams, ResizeMode, Shape, Tensor,
};
use crate::MopeRng;

pub const INSTANCE_NORM_EPS: f32 = 1e-5;

/// One layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// `match_size_of` names an earlier layer whose output spatial size this
    /// layer must reproduce; the runtime appends up to stride-1 output rows
    /// and columns to hit it. Without it the exact transpose formula
    /// (h-1)*stride - 2*pad + k applies.
    ConvTranspose {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        match_size_of: Option<usize>,
    },
    InstanceNorm {
        channels: usize,
    },
    Activation(Activation),
    BoxFilter,
    Resize {
        out_h: usize,
        out_w: usize,
        mode: ResizeMode,
    },
    /// Add the output of an earlier layer (same shape).
    AddSkip {
        from: usize,
    },
    /// Concatenate the output of an earlier layer along channels.
    ConcatSkip {
        from: usize,
    },
    GlobalAvgPool,
}

/// Ordered layer description a network is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
}

impl ParamRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Gamma => "gamma",
            ParamRole::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Option<ParamRole> {
        match s {
            "weight" => Some(ParamRole::Weight),
            "bias" => Some(ParamRole::Bias),
            "gamma" => Some(ParamRole::Gamma),
            "beta" => Some(ParamRole::Beta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamKey {
    pub layer: usize,
    pub role: ParamRole,
}

impl ParamKey {
    pub fn new(layer: usize, role: ParamRole) -> Self {
        ParamKey { layer, role }
    }

    pub fn name(&self) -> String {
        format!("layer{}.{}", self.layer, self.role.as_str())
    }

    pub fn parse(name: &str) -> Option<ParamKey> {
        let rest = name.strip_prefix("layer")?;
        let (idx, role) = rest.split_once('.')?;
        Some(ParamKey {
            layer: idx.parse().ok()?,
            role: ParamRole::parse(role)?,
        })
    }
}

/// Named map from (layer index, parameter role) to tensors. Iteration order
/// is the key order, which keeps serialization and updates deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<ParamKey, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: ParamKey, value: Tensor) {
        self.entries.insert(key, value);
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.entries.get(&key)
    }

    pub fn get_mut(&mut self, key: ParamKey) -> Option<&mut Tensor> {
        self.entries.get_mut(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&ParamKey, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all entries.
    pub fn total_values(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    /// A store with the same keys and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (*k, Tensor::zeros(v.shape())))
                .collect(),
        }
    }
}

fn vector_param(values: Vec<f32>) -> Tensor {
    let len = values.len();
    Tensor::from_vec(Shape::new(1, 1, 1, len), values).expect("length matches by construction")
}

/// Activations recorded by a traced forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Tensor,
    outputs: Vec<Tensor>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.outputs
            .last()
            .unwrap_or(&self.input)
    }
}

/// A validated network: the spec plus the per-layer channel bookkeeping.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    out_channels: Vec<usize>,
}

impl Network {
    /// Validate `spec` and initialize its parameters deterministically from
    /// `seed` (He-normal conv weights, zero biases, identity norms).
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<(Network, ParamStore)> {
        let out_channels = validate(&spec)?;
        let mut rng = MopeRng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (idx, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    let std = (2.0 / (kernel * kernel * in_ch) as f32).sqrt();
                    let normal = Normal::new(0.0f32, std).expect("std is finite");
                    let shape = Shape::new(out_ch, in_ch, kernel, kernel);
                    let data = (0..shape.numel()).map(|_| normal.sample(&mut rng)).collect();
                    params.insert(
                        ParamKey::new(idx, ParamRole::Weight),
                        Tensor::from_vec(shape, data)?,
                    );
                    params.insert(
                        ParamKey::new(idx, ParamRole::Bias),
                        vector_param(vec![0.0; out_ch]),
                    );
                }
                LayerSpec::ConvTranspose {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    let std = (2.0 / (kernel * kernel * in_ch) as f32).sqrt();
                    let normal = Normal::new(0.0f32, std).expect("std is finite");
                    // first axis is the input channel count (see tensor::conv)
                    let shape = Shape::new(in_ch, out_ch, kernel, kernel);
                    let data = (0..shape.numel()).map(|_| normal.sample(&mut rng)).collect();
                    params.insert(
                        ParamKey::new(idx, ParamRole::Weight),
                        Tensor::from_vec(shape, data)?,
                    );
                    params.insert(
                        ParamKey::new(idx, ParamRole::Bias),
                        vector_param(vec![0.0; out_ch]),
                    );
                }
                LayerSpec::InstanceNorm { channels } => {
                    params.insert(
                        ParamKey::new(idx, ParamRole::Gamma),
                        vector_param(vec![1.0; channels]),
                    );
                    params.insert(
                        ParamKey::new(idx, ParamRole::Beta),
                        vector_param(vec![0.0; channels]),
                    );
                }
                _ => {}
            }
        }
        Ok((
            Network {
                spec,
                out_channels,
            },
            params,
        ))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Channel count of each layer's output.
    pub fn out_channels(&self) -> &[usize] {
        &self.out_channels
    }

    /// Keys of every learnable parameter, in order.
    pub fn param_keys(&self) -> Vec<ParamKey> {
        let mut keys = Vec::new();
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { .. } | LayerSpec::ConvTranspose { .. } => {
                    keys.push(ParamKey::new(idx, ParamRole::Weight));
                    keys.push(ParamKey::new(idx, ParamRole::Bias));
                }
                LayerSpec::InstanceNorm { .. } => {
                    keys.push(ParamKey::new(idx, ParamRole::Gamma));
                    keys.push(ParamKey::new(idx, ParamRole::Beta));
                }
                _ => {}
            }
        }
        keys
    }

    /// Check that `store` carries exactly the parameters this network needs.
    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        let expected = self.param_keys();
        for key in &expected {
            if store.get(*key).is_none() {
                return Err(MopeError::MissingTensor(key.name()));
            }
        }
        if store.len() != expected.len() {
            for (key, _) in store.iter() {
                if !expected.contains(key) {
                    return Err(MopeError::UnknownTensor(key.name()));
                }
            }
        }
        Ok(())
    }

    fn conv_params(&self, params: &ParamStore, idx: usize, stride: usize, pad: usize) -> Result<ConvParams> {
        let weight = params
            .get(ParamKey::new(idx, ParamRole::Weight))
            .ok_or_else(|| MopeError::MissingTensor(ParamKey::new(idx, ParamRole::Weight).name()))?;
        let bias = params
            .get(ParamKey::new(idx, ParamRole::Bias))
            .ok_or_else(|| MopeError::MissingTensor(ParamKey::new(idx, ParamRole::Bias).name()))?;
        ConvParams::new(weight.clone(), bias.data().to_vec(), stride, pad)
    }

    /// Run the network; returns the final output.
    pub fn forward(&self, params: &ParamStore, input: &Tensor) -> Result<Tensor> {
        let tape = self.forward_traced(params, input)?;
        Ok(tape.outputs.into_iter().last().unwrap_or(tape.input))
    }

    /// Run the network keeping every intermediate activation for `backward`.
    pub fn forward_traced(&self, params: &ParamStore, input: &Tensor) -> Result<Tape> {
        if input.shape().c != self.spec.input_channels {
            return Err(MopeError::Shape(format!(
                "{}: input has {} channels, spec expects {}",
                self.spec.name,
                input.shape().c,
                self.spec.input_channels
            )));
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.spec.layers.len());
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let cur = if idx == 0 { input } else { &outputs[idx - 1] };
            let out = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let p = self.conv_params(params, idx, stride, pad)?;
                    conv2d(cur, &p)?
                }
                LayerSpec::ConvTranspose {
                    stride,
                    pad,
                    kernel,
                    match_size_of,
                    ..
                } => {
                    let p = self.conv_params(params, idx, stride, pad)?;
                    let out_pad = transpose_out_pad(
                        cur.shape(),
                        kernel,
                        stride,
                        pad,
                        match_size_of.map(|j| outputs[j].shape()),
                        idx,
                    )?;
                    conv_transpose2d_padded(cur, &p, out_pad)?
                }
                LayerSpec::InstanceNorm { .. } => {
                    let gamma = params
                        .get(ParamKey::new(idx, ParamRole::Gamma))
                        .ok_or_else(|| MopeError::MissingTensor(ParamKey::new(idx, ParamRole::Gamma).name()))?;
                    let beta = params
                        .get(ParamKey::new(idx, ParamRole::Beta))
                        .ok_or_else(|| MopeError::MissingTensor(ParamKey::new(idx, ParamRole::Beta).name()))?;
                    instance_norm(cur, gamma.data(), beta.data(), INSTANCE_NORM_EPS)?
                }
                LayerSpec::Activation(kind) => activation(cur, kind),
                LayerSpec::BoxFilter => box_filter3(cur),
                LayerSpec::Resize { out_h, out_w, mode } => resize(cur, out_h, out_w, mode)?,
                LayerSpec::AddSkip { from } => elementwise_add(cur, &outputs[from])?,
                LayerSpec::ConcatSkip { from } => concat_channels(cur, &outputs[from])?,
                LayerSpec::GlobalAvgPool => global_avg_pool(cur),
            };
            outputs.push(out);
        }
        Ok(Tape {
            input: input.clone(),
            outputs,
        })
    }

    /// Backward sweep over a tape. Returns the parameter gradients and the
    /// gradient with respect to the network input (the latter lets a
    /// discriminator's gradient flow into the generator feeding it).
    pub fn backward(&self, params: &ParamStore, tape: &Tape, grad_out: &Tensor) -> Result<(ParamStore, Tensor)> {
        if tape.outputs.len() != self.spec.layers.len() {
            return Err(MopeError::Shape(format!(
                "{}: tape records {} layers, spec has {}",
                self.spec.name,
                tape.outputs.len(),
                self.spec.layers.len()
            )));
        }
        if !tape.outputs.is_empty() && grad_out.shape() != tape.outputs[tape.outputs.len() - 1].shape() {
            return Err(MopeError::Shape(format!(
                "{}: grad shape {} does not match output shape {}",
                self.spec.name,
                grad_out.shape(),
                tape.outputs[tape.outputs.len() - 1].shape()
            )));
        }
        let mut grads = ParamStore::new();
        for key in self.param_keys() {
            let shape = params
                .get(key)
                .ok_or_else(|| MopeError::MissingTensor(key.name()))?
                .shape();
            grads.insert(key, Tensor::zeros(shape));
        }
        // gradients parked for skip sources until the sweep reaches them
        let mut pending: HashMap<usize, Tensor> = HashMap::new();
        let mut grad = grad_out.clone();
        for idx in (0..self.spec.layers.len()).rev() {
            if let Some(extra) = pending.remove(&idx) {
                grad = elementwise_add(&grad, &extra)?;
            }
            let layer_in = if idx == 0 { &tape.input } else { &tape.outputs[idx - 1] };
            let layer_out = &tape.outputs[idx];
            grad = match self.spec.layers[idx] {
                LayerSpec::Conv { stride, pad, .. } => {
                    let p = self.conv_params(params, idx, stride, pad)?;
                    let g = conv2d_backward(layer_in, &p, &grad)?;
                    accumulate(&mut grads, ParamKey::new(idx, ParamRole::Weight), &g.weight)?;
                    accumulate(
                        &mut grads,
                        ParamKey::new(idx, ParamRole::Bias),
                        &vector_param(g.bias),
                    )?;
                    g.input
                }
                LayerSpec::ConvTranspose { stride, pad, kernel, .. } => {
                    let p = self.conv_params(params, idx, stride, pad)?;
                    let out_pad = transpose_out_pad(
                        layer_in.shape(),
                        kernel,
                        stride,
                        pad,
                        Some(layer_out.shape()),
                        idx,
                    )?;
                    let g = conv_transpose2d_backward_padded(layer_in, &p, out_pad, &grad)?;
                    accumulate(&mut grads, ParamKey::new(idx, ParamRole::Weight), &g.weight)?;
                    accumulate(
                        &mut grads,
                        ParamKey::new(idx, ParamRole::Bias),
                        &vector_param(g.bias),
                    )?;
                    g.input
                }
                LayerSpec::InstanceNorm { .. } => {
                    let gamma = params
                        .get(ParamKey::new(idx, ParamRole::Gamma))
                        .ok_or_else(|| MopeError::MissingTensor(ParamKey::new(idx, ParamRole::Gamma).name()))?;
                    let g = instance_norm_backward(layer_in, gamma.data(), INSTANCE_NORM_EPS, &grad)?;
                    accumulate(
                        &mut grads,
                        ParamKey::new(idx, ParamRole::Gamma),
                        &vector_param(g.gamma),
                    )?;
                    accumulate(
                        &mut grads,
                        ParamKey::new(idx, ParamRole::Beta),
                        &vector_param(g.beta),
                    )?;
                    g.input
                }
                LayerSpec::Activation(kind) => {
                    activation_backward(layer_in, layer_out, kind, &grad)
                }
                LayerSpec::BoxFilter => box_filter3_backward(&grad),
                LayerSpec::Resize { mode, .. } => {
                    resize_backward(&grad, layer_in.shape().h, layer_in.shape().w, mode)
                }
                LayerSpec::AddSkip { from } => {
                    let (g_main, g_skip) = crate::tensor::elementwise_add_backward(&grad);
                    merge_pending(&mut pending, from, g_skip)?;
                    g_main
                }
                LayerSpec::ConcatSkip { from } => {
                    let main_channels = layer_in.shape().c;
                    let (g_main, g_skip) = concat_channels_backward(&grad, main_channels)?;
                    merge_pending(&mut pending, from, g_skip)?;
                    g_main
                }
                LayerSpec::GlobalAvgPool => global_avg_pool_backward(&grad, layer_in.shape()),
            };
        }
        Ok((grads, grad))
    }
}

fn merge_pending(pending: &mut HashMap<usize, Tensor>, from: usize, grad: Tensor) -> Result<()> {
    match pending.remove(&from) {
        Some(existing) => {
            pending.insert(from, elementwise_add(&existing, &grad)?);
        }
        None => {
            pending.insert(from, grad);
        }
    }
    Ok(())
}

fn accumulate(grads: &mut ParamStore, key: ParamKey, delta: &Tensor) -> Result<()> {
    let slot = grads
        .get_mut(key)
        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
    if slot.shape() != delta.shape() {
        return Err(MopeError::Shape(format!(
            "gradient for {} has shape {}, expected {}",
            key.name(),
            delta.shape(),
            slot.shape()
        )));
    }
    for (a, b) in slot.data_mut().iter_mut().zip(delta.data()) {
        *a += b;
    }
    Ok(())
}

/// Work out the (rows, cols) output padding a transposed conv needs to land
/// on `target` (when given), checking it stays below the stride.
fn transpose_out_pad(
    input: Shape,
    kernel: usize,
    stride: usize,
    pad: usize,
    target: Option<Shape>,
    layer_idx: usize,
) -> Result<(usize, usize)> {
    let target = match target {
        None => return Ok((0, 0)),
        Some(t) => t,
    };
    let base_h = crate::tensor::transpose_out_size(input.h, kernel, stride, pad, 0)?;
    let base_w = crate::tensor::transpose_out_size(input.w, kernel, stride, pad, 0)?;
    let pad_h = target.h.checked_sub(base_h);
    let pad_w = target.w.checked_sub(base_w);
    match (pad_h, pad_w) {
        (Some(ph), Some(pw)) if ph < stride && pw < stride => Ok((ph, pw)),
        _ => Err(MopeError::Spec {
            layer: layer_idx,
            reason: format!(
                "transposed conv output {}x{} cannot be padded to match {}x{}",
                base_h, base_w, target.h, target.w
            ),
        }),
    }
}

fn global_avg_pool(input: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = input.shape();
    let mut out = Tensor::zeros(Shape::new(n, c, 1, 1));
    let m = (h * w) as f32;
    for ni in 0..n {
        for ci in 0..c {
            let s: f32 = input.plane(ni, ci).iter().sum();
            *out.at_mut(ni, ci, 0, 0) = s / m;
        }
    }
    out
}

fn global_avg_pool_backward(grad_out: &Tensor, in_shape: Shape) -> Tensor {
    let mut gin = Tensor::zeros(in_shape);
    let m = (in_shape.h * in_shape.w) as f32;
    for ni in 0..in_shape.n {
        for ci in 0..in_shape.c {
            let share = grad_out.at(ni, ci, 0, 0) / m;
            for v in gin.plane_mut(ni, ci) {
                *v = share;
            }
        }
    }
    gin
}

/// Channel bookkeeping; returns the per-layer output channel counts or the
/// first offending layer.
fn validate(spec: &NetworkSpec) -> Result<Vec<usize>> {
    let mut channels = spec.input_channels;
    let mut out_channels = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        let fail = |reason: String| MopeError::Spec { layer: idx, reason };
        match *layer {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, .. }
            | LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, .. } => {
                if in_ch != channels {
                    return Err(fail(format!(
                        "expects {in_ch} input channels but receives {channels}"
                    )));
                }
                if kernel % 2 == 0 || kernel == 0 {
                    return Err(fail(format!("kernel size {kernel} must be odd")));
                }
                if stride == 0 {
                    return Err(fail("stride must be >= 1".into()));
                }
                if let LayerSpec::ConvTranspose { match_size_of: Some(j), .. } = *layer {
                    if j >= idx {
                        return Err(fail(format!(
                            "match_size_of {j} must reference an earlier layer"
                        )));
                    }
                }
                channels = out_ch;
            }
            LayerSpec::InstanceNorm { channels: c } => {
                if c != channels {
                    return Err(fail(format!(
                        "normalizes {c} channels but receives {channels}"
                    )));
                }
            }
            LayerSpec::Activation(_) | LayerSpec::BoxFilter | LayerSpec::GlobalAvgPool => {}
            LayerSpec::Resize { out_h, out_w, .. } => {
                if out_h == 0 || out_w == 0 {
                    return Err(fail("resize target must be at least 1x1".into()));
                }
            }
            LayerSpec::AddSkip { from } => {
                if from >= idx {
                    return Err(fail(format!("skip source {from} must be an earlier layer")));
                }
                let src = out_channels[from];
                if src != channels {
                    return Err(fail(format!(
                        "adds {src}-channel skip onto {channels} channels"
                    )));
                }
            }
            LayerSpec::ConcatSkip { from } => {
                if from >= idx {
                    return Err(fail(format!("skip source {from} must be an earlier layer")));
                }
                channels += out_channels[from];
            }
        }
        out_channels.push(channels);
    }
    Ok(out_channels)
}

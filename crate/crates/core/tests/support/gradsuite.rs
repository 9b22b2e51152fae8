//! The finite-difference gradient suite: every backward pass in the crate
//! checked against central differences, including losses chained through
//! the full networks. Shared by the gradcheck tests and the acceptance
//! runner.

use super::{
    fd_check_params, fd_check_tensor, proj_loss, rand_projection, rand_tensor, FD_STEP,
    FD_STEP_LINEAR,
};
use mope_core::graph::LayerSpec as L;
use mope_core::graph::{LayerSpec, Network, NetworkSpec, ParamStore};
use mope_core::models::{build_classifier, build_denoiser, build_discriminator, build_gating};
use mope_core::tensor::{
    activation, activation_backward, box_filter3, box_filter3_backward, conv2d, conv2d_backward,
    conv_transpose2d_backward_padded, conv_transpose2d_padded, instance_norm,
    instance_norm_backward, resize, resize_backward, Activation, ConvParams, ResizeMode, Shape,
    Tensor,
};
use mope_core::training::{cross_entropy, gate_loss_batch, log_loss_fake, log_loss_real, sim_loss, sim_loss_grad};
use mope_core::MopeRng;
use rand::SeedableRng;

pub struct GradCase {
    pub name: &'static str,
    pub worst: f64,
}

const PROBES: usize = 50;

fn conv_params(weight: Tensor, c_bias: usize, stride: usize, pad: usize, rng: &mut MopeRng) -> ConvParams {
    let bias = rand_tensor(Shape::new(1, 1, 1, c_bias), rng, -0.3, 0.3)
        .into_data();
    ConvParams::new(weight, bias, stride, pad).unwrap()
}

pub fn conv2d_case() -> f64 {
    let mut rng = MopeRng::seed_from_u64(101);
    let x = rand_tensor(Shape::new(2, 3, 7, 8), &mut rng, -1.0, 1.0);
    let w = rand_tensor(Shape::new(4, 3, 3, 3), &mut rng, -0.5, 0.5);
    let p = conv_params(w, 4, 2, 1, &mut rng);
    let out = conv2d(&x, &p).unwrap();
    let proj = rand_projection(out.shape(), &mut rng);
    let grads = conv2d_backward(&x, &p, &proj).unwrap();

    let mut worst: f64 = 0.0;
    // input gradient
    let p0 = p.clone();
    worst = worst.max(fd_check_tensor(
        &mut |xx| proj_loss(&conv2d(xx, &p0).unwrap(), &proj),
        &x,
        &grads.input,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    // weight gradient
    let (x0, p1) = (x.clone(), p.clone());
    worst = worst.max(fd_check_tensor(
        &mut |ww| {
            let pw = ConvParams::new(ww.clone(), p1.bias.clone(), p1.stride, p1.pad).unwrap();
            proj_loss(&conv2d(&x0, &pw).unwrap(), &proj)
        },
        &p.weight,
        &grads.weight,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    // bias gradient
    let bias_t = Tensor::from_vec(Shape::new(1, 1, 1, 4), p.bias.clone()).unwrap();
    let grad_bias_t = Tensor::from_vec(Shape::new(1, 1, 1, 4), grads.bias.clone()).unwrap();
    let (x1, p2) = (x.clone(), p.clone());
    worst = worst.max(fd_check_tensor(
        &mut |bb| {
            let pb = ConvParams::new(p2.weight.clone(), bb.data().to_vec(), p2.stride, p2.pad)
                .unwrap();
            proj_loss(&conv2d(&x1, &pb).unwrap(), &proj)
        },
        &bias_t,
        &grad_bias_t,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    worst
}

pub fn conv_transpose_case() -> f64 {
    let mut rng = MopeRng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for out_pad in [0usize, 1] {
        let x = rand_tensor(Shape::new(2, 4, 5, 6), &mut rng, -1.0, 1.0);
        let w = rand_tensor(Shape::new(4, 3, 3, 3), &mut rng, -0.5, 0.5);
        let p = conv_params(w, 3, 2, 1, &mut rng);
        let pads = (out_pad, out_pad);
        let out = conv_transpose2d_padded(&x, &p, pads).unwrap();
        let proj = rand_projection(out.shape(), &mut rng);
        let grads = conv_transpose2d_backward_padded(&x, &p, pads, &proj).unwrap();

        let p0 = p.clone();
        worst = worst.max(fd_check_tensor(
            &mut |xx| proj_loss(&conv_transpose2d_padded(xx, &p0, pads).unwrap(), &proj),
            &x,
            &grads.input,
            PROBES,
            FD_STEP_LINEAR,
            &mut rng,
        ));
        let (x0, p1) = (x.clone(), p.clone());
        worst = worst.max(fd_check_tensor(
            &mut |ww| {
                let pw =
                    ConvParams::new(ww.clone(), p1.bias.clone(), p1.stride, p1.pad).unwrap();
                proj_loss(&conv_transpose2d_padded(&x0, &pw, pads).unwrap(), &proj)
            },
            &p.weight,
            &grads.weight,
            PROBES,
            FD_STEP_LINEAR,
            &mut rng,
        ));
    }
    worst
}

pub fn instance_norm_case() -> f64 {
    let mut rng = MopeRng::seed_from_u64(303);
    let eps = 1e-5f32;
    let x = rand_tensor(Shape::new(2, 3, 6, 6), &mut rng, -1.0, 1.0);
    let gamma = rand_tensor(Shape::new(1, 1, 1, 3), &mut rng, 0.5, 1.5);
    let beta = rand_tensor(Shape::new(1, 1, 1, 3), &mut rng, -0.5, 0.5);
    let out = instance_norm(&x, gamma.data(), beta.data(), eps).unwrap();
    let proj = rand_projection(out.shape(), &mut rng);
    let grads = instance_norm_backward(&x, gamma.data(), eps, &proj).unwrap();

    let mut worst: f64 = 0.0;
    let (g0, b0) = (gamma.clone(), beta.clone());
    worst = worst.max(fd_check_tensor(
        &mut |xx| proj_loss(&instance_norm(xx, g0.data(), b0.data(), eps).unwrap(), &proj),
        &x,
        &grads.input,
        PROBES,
        FD_STEP,
        &mut rng,
    ));
    let (x0, b1) = (x.clone(), beta.clone());
    let grad_gamma = Tensor::from_vec(Shape::new(1, 1, 1, 3), grads.gamma.clone()).unwrap();
    worst = worst.max(fd_check_tensor(
        &mut |gg| proj_loss(&instance_norm(&x0, gg.data(), b1.data(), eps).unwrap(), &proj),
        &gamma,
        &grad_gamma,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    let (x1, g1) = (x.clone(), gamma.clone());
    let grad_beta = Tensor::from_vec(Shape::new(1, 1, 1, 3), grads.beta.clone()).unwrap();
    worst = worst.max(fd_check_tensor(
        &mut |bb| proj_loss(&instance_norm(&x1, g1.data(), bb.data(), eps).unwrap(), &proj),
        &beta,
        &grad_beta,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    worst
}

pub fn activation_case(kind: Activation) -> f64 {
    let mut rng = MopeRng::seed_from_u64(404);
    // keep rectifier inputs away from the kink at zero
    let x = {
        let mut t = rand_tensor(Shape::new(2, 2, 6, 6), &mut rng, 0.1, 1.0);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            if i % 2 == 0 {
                *v = -*v;
            }
        }
        t
    };
    let y = activation(&x, kind);
    let proj = rand_projection(y.shape(), &mut rng);
    let grad = activation_backward(&x, &y, kind, &proj);
    fd_check_tensor(
        &mut |xx| proj_loss(&activation(xx, kind), &proj),
        &x,
        &grad,
        PROBES,
        FD_STEP,
        &mut rng,
    )
}

pub fn box_filter_case() -> f64 {
    let mut rng = MopeRng::seed_from_u64(505);
    let x = rand_tensor(Shape::new(1, 3, 7, 9), &mut rng, -1.0, 1.0);
    let out = box_filter3(&x);
    let proj = rand_projection(out.shape(), &mut rng);
    let grad = box_filter3_backward(&proj);
    fd_check_tensor(
        &mut |xx| proj_loss(&box_filter3(xx), &proj),
        &x,
        &grad,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    )
}

pub fn resize_case(mode: ResizeMode) -> f64 {
    let mut rng = MopeRng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for (oh, ow) in [(11, 13), (3, 4)] {
        let x = rand_tensor(Shape::new(1, 2, 6, 7), &mut rng, -1.0, 1.0);
        let out = resize(&x, oh, ow, mode).unwrap();
        let proj = rand_projection(out.shape(), &mut rng);
        let grad = resize_backward(&proj, 6, 7, mode);
        worst = worst.max(fd_check_tensor(
            &mut |xx| proj_loss(&resize(xx, oh, ow, mode).unwrap(), &proj),
            &x,
            &grad,
            PROBES,
            FD_STEP_LINEAR,
            &mut rng,
        ));
    }
    worst
}

/// Loss of a projected network output as a function of its parameters.
fn net_param_case(net: &Network, params: &ParamStore, x: &Tensor, seed: u64) -> f64 {
    let mut rng = MopeRng::seed_from_u64(seed);
    let tape = net.forward_traced(params, x).unwrap();
    let proj = rand_projection(tape.output().shape(), &mut rng);
    let (grads, grad_in) = net.backward(params, &tape, &proj).unwrap();

    let mut worst = fd_check_params(
        &mut |pp| proj_loss(&net.forward(pp, x).unwrap(), &proj),
        params,
        &grads,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    );
    worst = worst.max(fd_check_tensor(
        &mut |xx| proj_loss(&net.forward(params, xx).unwrap(), &proj),
        x,
        &grad_in,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    ));
    worst
}

pub fn additive_skip_case() -> f64 {
    let spec = NetworkSpec {
        name: "skip-add".into(),
        input_channels: 2,
        layers: vec![
            LayerSpec::Conv { in_ch: 2, out_ch: 4, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Activation(Activation::Tanh),
            LayerSpec::Conv { in_ch: 4, out_ch: 4, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::AddSkip { from: 1 },
            LayerSpec::Conv { in_ch: 4, out_ch: 2, kernel: 3, stride: 1, pad: 1 },
        ],
    };
    let (net, params) = Network::build(spec, 7070).unwrap();
    let mut rng = MopeRng::seed_from_u64(707);
    let x = rand_tensor(Shape::new(1, 2, 6, 6), &mut rng, -0.8, 0.8);
    net_param_case(&net, &params, &x, 708)
}

pub fn concat_skip_case() -> f64 {
    let spec = NetworkSpec {
        name: "skip-concat".into(),
        input_channels: 2,
        layers: vec![
            LayerSpec::Conv { in_ch: 2, out_ch: 3, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Activation(Activation::Tanh),
            LayerSpec::Conv { in_ch: 3, out_ch: 3, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::ConcatSkip { from: 1 },
            LayerSpec::Conv { in_ch: 6, out_ch: 2, kernel: 3, stride: 1, pad: 1 },
        ],
    };
    let (net, params) = Network::build(spec, 8080).unwrap();
    let mut rng = MopeRng::seed_from_u64(808);
    let x = rand_tensor(Shape::new(1, 2, 6, 6), &mut rng, -1.0, 1.0);
    net_param_case(&net, &params, &x, 809)
}

/// Gating objective through the full gating network.
pub fn gate_loss_through_network_case() -> f64 {
    let (net, params) = Network::build(build_gating(), 9090).unwrap();
    let mut rng = MopeRng::seed_from_u64(909);
    let clean = rand_tensor(Shape::new(2, 3, 16, 16), &mut rng, 0.0, 1.0);
    let noisy = rand_tensor(Shape::new(2, 3, 16, 16), &mut rng, 0.0, 1.0);

    let tape_c = net.forward_traced(&params, &clean).unwrap();
    let tape_n = net.forward_traced(&params, &noisy).unwrap();
    let (_, gc, gn) = gate_loss_batch(tape_c.output(), tape_n.output()).unwrap();
    let (mut grads, _) = net.backward(&params, &tape_c, &gc).unwrap();
    let (grads_n, _) = net.backward(&params, &tape_n, &gn).unwrap();
    for (key, g) in grads.iter_mut() {
        for (a, &b) in g.data_mut().iter_mut().zip(grads_n.get(*key).unwrap().data()) {
            *a += b;
        }
    }

    fd_check_params(
        &mut |pp| {
            let c = net.forward(pp, &clean).unwrap();
            let n = net.forward(pp, &noisy).unwrap();
            gate_loss_batch(&c, &n).unwrap().0
        },
        &params,
        &grads,
        PROBES,
        FD_STEP,
        &mut rng,
    )
}

/// Discriminator objective through the full discriminator.
pub fn discriminator_loss_case() -> f64 {
    let (net, params) = Network::build(build_discriminator(), 10101).unwrap();
    let mut rng = MopeRng::seed_from_u64(1010);
    let real = rand_tensor(Shape::new(2, 3, 16, 16), &mut rng, 0.0, 1.0);
    let fake = rand_tensor(Shape::new(2, 3, 16, 16), &mut rng, 0.0, 1.0);

    let tape_r = net.forward_traced(&params, &real).unwrap();
    let tape_f = net.forward_traced(&params, &fake).unwrap();
    let (_, grad_r) = log_loss_real(tape_r.output());
    let (_, grad_f) = log_loss_fake(tape_f.output());
    let (mut grads, _) = net.backward(&params, &tape_r, &grad_r).unwrap();
    let (grads_f, _) = net.backward(&params, &tape_f, &grad_f).unwrap();
    for (key, g) in grads.iter_mut() {
        for (a, &b) in g.data_mut().iter_mut().zip(grads_f.get(*key).unwrap().data()) {
            *a += b;
        }
    }

    fd_check_params(
        &mut |pp| {
            let r = net.forward(pp, &real).unwrap();
            let f = net.forward(pp, &fake).unwrap();
            log_loss_real(&r).0 + log_loss_fake(&f).0
        },
        &params,
        &grads,
        PROBES,
        FD_STEP,
        &mut rng,
    )
}

fn smooth(spec: NetworkSpec) -> NetworkSpec {
    // rectifier kernels are FD-verified pointwise in activation_case; the
    // chain checks swap them for tanh because a dense field of relu kinks
    // makes f32 central differences measure interval averages instead of
    // point derivatives
    NetworkSpec {
        layers: spec
            .layers
            .into_iter()
            .map(|l| match l {
                L::Activation(Activation::LeakyRelu(_)) | L::Activation(Activation::Relu) => {
                    L::Activation(Activation::Tanh)
                }
                other => other,
            })
            .collect(),
        ..spec
    }
}

/// Full generator objective: the discriminator's gradient flows through its
/// input into the denoiser, plus the similarity term.
pub fn generator_chain_case() -> f64 {
    let (gen, gen_params) = Network::build(smooth(build_denoiser()), 11111).unwrap();
    let (disc, disc_params) = Network::build(smooth(build_discriminator()), 12121).unwrap();
    let mut rng = MopeRng::seed_from_u64(1111);
    let clean = rand_tensor(Shape::new(1, 3, 12, 12), &mut rng, 0.0, 1.0);
    let noisy = rand_tensor(Shape::new(1, 3, 12, 12), &mut rng, 0.0, 1.0);
    let lambda = 1.0f32;

    let tape_g = gen.forward_traced(&gen_params, &noisy).unwrap();
    let fake = tape_g.output().clone();
    let tape_d = disc.forward_traced(&disc_params, &fake).unwrap();
    let (_, grad_map) = log_loss_real(tape_d.output());
    let (_, mut grad_fake) = disc.backward(&disc_params, &tape_d, &grad_map).unwrap();
    let grad_sim = sim_loss_grad(&fake, &clean).unwrap();
    for (a, &b) in grad_fake.data_mut().iter_mut().zip(grad_sim.data()) {
        *a += lambda * b;
    }
    let (grads, _) = gen.backward(&gen_params, &tape_g, &grad_fake).unwrap();

    fd_check_params(
        &mut |pp| {
            let f = gen.forward(pp, &noisy).unwrap();
            let d = disc.forward(&disc_params, &f).unwrap();
            log_loss_real(&d).0 + lambda as f64 * sim_loss(&f, &clean).unwrap()
        },
        &gen_params,
        &grads,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    )
}

/// Cross-entropy through the proxy classifier.
pub fn classifier_loss_case() -> f64 {
    let (net, params) = Network::build(smooth(build_classifier(4)), 13131).unwrap();
    let mut rng = MopeRng::seed_from_u64(1313);
    let x = rand_tensor(Shape::new(3, 3, 16, 16), &mut rng, 0.0, 1.0);
    let labels = [0usize, 2, 3];

    let tape = net.forward_traced(&params, &x).unwrap();
    let (_, grad) = cross_entropy(tape.output(), &labels).unwrap();
    let (grads, _) = net.backward(&params, &tape, &grad).unwrap();

    fd_check_params(
        &mut |pp| {
            let logits = net.forward(pp, &x).unwrap();
            cross_entropy(&logits, &labels).unwrap().0
        },
        &params,
        &grads,
        PROBES,
        FD_STEP_LINEAR,
        &mut rng,
    )
}

/// The whole suite.
pub fn run_full_suite() -> Vec<GradCase> {
    vec![
        GradCase { name: "conv2d", worst: conv2d_case() },
        GradCase { name: "conv_transpose2d", worst: conv_transpose_case() },
        GradCase { name: "instance_norm", worst: instance_norm_case() },
        GradCase { name: "relu", worst: activation_case(Activation::Relu) },
        GradCase { name: "leaky_relu", worst: activation_case(Activation::LeakyRelu(0.2)) },
        GradCase { name: "sigmoid", worst: activation_case(Activation::Sigmoid) },
        GradCase { name: "tanh", worst: activation_case(Activation::Tanh) },
        GradCase { name: "box_filter3", worst: box_filter_case() },
        GradCase { name: "resize_nearest", worst: resize_case(ResizeMode::Nearest) },
        GradCase { name: "resize_bilinear", worst: resize_case(ResizeMode::Bilinear) },
        GradCase { name: "add_skip_network", worst: additive_skip_case() },
        GradCase { name: "concat_skip_network", worst: concat_skip_case() },
        GradCase { name: "gate_loss_full_network", worst: gate_loss_through_network_case() },
        GradCase { name: "discriminator_loss", worst: discriminator_loss_case() },
        GradCase { name: "generator_adversarial_chain", worst: generator_chain_case() },
        GradCase { name: "classifier_cross_entropy", worst: classifier_loss_case() },
    ]
}

//! Loss functions, optimizers, data streams and the three training
//! procedures: adversarial denoiser training, gating training, and
//! downstream classifier training / MoPE fine-tuning.

mod losses;
mod optim;

pub use losses::{
    cross_entropy, gan_loss, gate_loss, gate_loss_batch, log_loss_fake, log_loss_real, sim_loss,
    sim_loss_grad, total_loss, CLAMP,
};
pub use optim::{Optimizer, OptimizerKind};

use rand::{Rng, SeedableRng};

use crate::distortion::{sample_training_pair, DistortionConfig};
use crate::error::{MopeError, Result};
use crate::graph::{Network, ParamStore};
use crate::router::Mope;
use crate::tensor::Tensor;
use crate::MopeRng;

/// Knobs shared by every training procedure.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// (iteration, divisor) pairs; at each listed iteration the rate is
    /// divided by the divisor (cumulative).
    pub lr_schedule: Vec<(usize, f32)>,
    pub optimizer: OptimizerKind,
    pub lambda_sim: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_size: 16,
            learning_rate: 2e-4,
            lr_schedule: vec![],
            optimizer: OptimizerKind::adam_default(),
            lambda_sim: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, iteration: usize) -> f32 {
        let mut lr = self.learning_rate;
        for &(at, divisor) in &self.lr_schedule {
            if iteration >= at {
                lr /= divisor;
            }
        }
        lr
    }
}

/// One augmented batch: pre-noise bases and their noisy counterparts.
pub struct PairBatch {
    pub base: Tensor,
    pub noisy: Tensor,
    pub sigmas: Vec<f32>,
}

/// Stream of (base, noisy) batches drawn from a clean image pool.
pub struct PairStream<'a> {
    pool: &'a [Tensor],
    dist: DistortionConfig,
    rng: MopeRng,
}

impl<'a> PairStream<'a> {
    pub fn new(pool: &'a [Tensor], dist: DistortionConfig, seed: u64) -> Self {
        PairStream {
            pool,
            dist,
            rng: MopeRng::seed_from_u64(seed),
        }
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Result<PairBatch> {
        if self.pool.is_empty() {
            return Err(MopeError::InvalidArgument("empty image pool".into()));
        }
        let mut bases = Vec::with_capacity(batch_size);
        let mut noisies = Vec::with_capacity(batch_size);
        let mut sigmas = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let idx = self.rng.random_range(0..self.pool.len());
            let (base, noisy, sigma) =
                sample_training_pair(&self.pool[idx], &self.dist, &mut self.rng)?;
            bases.push(base);
            noisies.push(noisy);
            sigmas.push(sigma);
        }
        Ok(PairBatch {
            base: Tensor::stack(&bases)?,
            noisy: Tensor::stack(&noisies)?,
            sigmas,
        })
    }
}

/// Labeled batch for the downstream task.
pub struct LabeledBatch {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

/// How the labeled stream augments.
#[derive(Debug, Clone)]
pub enum Augmentation {
    /// Clean images only (the model-1 baseline).
    None,
    /// Each draw contributes the base (clean or low-res) and its noisy
    /// counterpart, both labeled like the source image.
    Distort(DistortionConfig),
}

/// Stream of labeled batches from a (image, label) pool.
pub struct LabeledStream<'a> {
    pool: &'a [(Tensor, usize)],
    augmentation: Augmentation,
    rng: MopeRng,
}

impl<'a> LabeledStream<'a> {
    pub fn new(pool: &'a [(Tensor, usize)], augmentation: Augmentation, seed: u64) -> Self {
        LabeledStream {
            pool,
            augmentation,
            rng: MopeRng::seed_from_u64(seed),
        }
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Result<LabeledBatch> {
        if self.pool.is_empty() {
            return Err(MopeError::InvalidArgument("empty labeled pool".into()));
        }
        let mut images = Vec::with_capacity(batch_size);
        let mut labels = Vec::with_capacity(batch_size);
        while images.len() < batch_size {
            let idx = self.rng.random_range(0..self.pool.len());
            let (image, label) = &self.pool[idx];
            match &self.augmentation {
                Augmentation::None => {
                    images.push(image.clone());
                    labels.push(*label);
                }
                Augmentation::Distort(dist) => {
                    let (base, noisy, _) = sample_training_pair(image, dist, &mut self.rng)?;
                    images.push(base);
                    labels.push(*label);
                    if images.len() < batch_size {
                        images.push(noisy);
                        labels.push(*label);
                    }
                }
            }
        }
        Ok(LabeledBatch { images, labels })
    }
}

fn add_stores(into: &mut ParamStore, from: &ParamStore) -> Result<()> {
    for (key, dst) in into.iter_mut() {
        let src = from
            .get(*key)
            .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
        for (a, &b) in dst.data_mut().iter_mut().zip(src.data()) {
            *a += b;
        }
    }
    Ok(())
}

fn ensure_finite(value: f64, iteration: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MopeError::NonFiniteLoss(iteration))
    }
}

/// Loss history row for adversarial denoiser training.
#[derive(Debug, Clone)]
pub struct DenoiserHistoryRow {
    pub iteration: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_sim: f64,
    pub lr: f32,
}

pub fn denoiser_history_csv(rows: &[DenoiserHistoryRow]) -> String {
    let mut out = String::from("iteration,loss_d,loss_g,loss_sim,lr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.iteration, r.loss_d, r.loss_g, r.loss_sim, r.lr
        ));
    }
    out
}

/// Scalar-loss history row (gate training, classifier training).
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f32,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iteration,loss,lr\n");
    for r in rows {
        out.push_str(&format!("{},{:.6},{:.6}\n", r.iteration, r.loss, r.lr));
    }
    out
}

/// Alternating adversarial training of the denoiser G against the
/// discriminator D: one D step maximizing the adversarial objective, then
/// one G step minimizing the non-saturating generator term plus
/// lambda times the similarity loss.
pub fn train_denoiser(
    gen: &Network,
    gen_params: &mut ParamStore,
    disc: &Network,
    disc_params: &mut ParamStore,
    stream: &mut PairStream,
    cfg: &TrainConfig,
) -> Result<Vec<DenoiserHistoryRow>> {
    gen.check_params(gen_params)?;
    disc.check_params(disc_params)?;
    let mut g_opt = Optimizer::new(cfg.optimizer);
    let mut d_opt = Optimizer::new(cfg.optimizer);
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let lr = cfg.lr_at(it);
        let batch = stream.next_batch(cfg.batch_size)?;

        // D step: push D(base) toward 1 and D(G(noisy)) toward 0
        let fake = gen.forward(gen_params, &batch.noisy)?;
        let tape_real = disc.forward_traced(disc_params, &batch.base)?;
        let tape_fake = disc.forward_traced(disc_params, &fake)?;
        let (loss_real, grad_real) = log_loss_real(tape_real.output());
        let (loss_fake, grad_fake) = log_loss_fake(tape_fake.output());
        let loss_d = ensure_finite(loss_real + loss_fake, it)?;
        let (mut d_grads, _) = disc.backward(disc_params, &tape_real, &grad_real)?;
        let (d_grads_fake, _) = disc.backward(disc_params, &tape_fake, &grad_fake)?;
        add_stores(&mut d_grads, &d_grads_fake)?;
        d_opt.step(disc_params, &d_grads, lr)?;

        // G step: non-saturating adversarial term plus similarity term;
        // D's weights stay fixed but its input gradient flows into G.
        // The similarity objective is the squared L2 norm (a sum over
        // elements, not a mean): with a mean the adversarial gradient is
        // a couple of hundred times larger and fidelity never recovers.
        let tape_g = gen.forward_traced(gen_params, &batch.noisy)?;
        let fake = tape_g.output().clone();
        let tape_d = disc.forward_traced(disc_params, &fake)?;
        let (loss_g, grad_adv_map) = log_loss_real(tape_d.output());
        let loss_g = ensure_finite(loss_g, it)?;
        let (_, grad_fake_adv) = disc.backward(disc_params, &tape_d, &grad_adv_map)?;
        let loss_sim = ensure_finite(sim_loss(&fake, &batch.base)?, it)?;
        let grad_sim = sim_loss_grad(&fake, &batch.base)?;
        let sum_scale = fake.numel() as f32;
        let mut grad_at_fake = grad_fake_adv;
        for (a, &b) in grad_at_fake.data_mut().iter_mut().zip(grad_sim.data()) {
            *a += cfg.lambda_sim as f32 * sum_scale * b;
        }
        let (g_grads, _) = gen.backward(gen_params, &tape_g, &grad_at_fake)?;
        g_opt.step(gen_params, &g_grads, lr)?;

        history.push(DenoiserHistoryRow {
            iteration: it,
            loss_d,
            loss_g,
            loss_sim,
            lr,
        });
    }
    Ok(history)
}

/// Train the gating network to score bases (clean or low-res) high and
/// noisy images low.
pub fn train_gate(
    gate: &Network,
    gate_params: &mut ParamStore,
    stream: &mut PairStream,
    cfg: &TrainConfig,
) -> Result<Vec<HistoryRow>> {
    gate.check_params(gate_params)?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let lr = cfg.lr_at(it);
        let batch = stream.next_batch(cfg.batch_size)?;
        let tape_clean = gate.forward_traced(gate_params, &batch.base)?;
        let tape_noisy = gate.forward_traced(gate_params, &batch.noisy)?;
        let (loss, grad_clean, grad_noisy) =
            gate_loss_batch(tape_clean.output(), tape_noisy.output())?;
        let loss = ensure_finite(loss, it)?;
        let (mut grads, _) = gate.backward(gate_params, &tape_clean, &grad_clean)?;
        let (grads_noisy, _) = gate.backward(gate_params, &tape_noisy, &grad_noisy)?;
        add_stores(&mut grads, &grads_noisy)?;
        opt.step(gate_params, &grads, lr)?;
        history.push(HistoryRow {
            iteration: it,
            loss,
            lr,
        });
    }
    Ok(history)
}

/// Train the proxy classifier on its task loss. When `mope` is given every
/// batch image is routed through it first; the mixture's own parameters are
/// frozen (only the classifier learns).
pub fn train_classifier(
    net: &Network,
    params: &mut ParamStore,
    stream: &mut LabeledStream,
    mope: Option<&Mope>,
    cfg: &TrainConfig,
) -> Result<Vec<HistoryRow>> {
    net.check_params(params)?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let lr = cfg.lr_at(it);
        let batch = stream.next_batch(cfg.batch_size)?;
        let images = match mope {
            None => Tensor::stack(&batch.images)?,
            Some(m) => {
                let (routed, _) = m.preprocess_batch(&batch.images)?;
                Tensor::stack(&routed)?
            }
        };
        let tape = net.forward_traced(params, &images)?;
        let (loss, grad) = cross_entropy(tape.output(), &batch.labels)?;
        let loss = ensure_finite(loss, it)?;
        let (grads, _) = net.backward(params, &tape, &grad)?;
        opt.step(params, &grads, lr)?;
        history.push(HistoryRow {
            iteration: it,
            loss,
            lr,
        });
    }
    Ok(history)
}

/// Accuracy of a classifier over labeled items, optionally routing each
/// image through the mixture first.
pub fn evaluate_classifier(
    net: &Network,
    params: &ParamStore,
    items: &[(Tensor, usize)],
    mope: Option<&Mope>,
) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in items.chunks(32) {
        let mut images = Vec::with_capacity(chunk.len());
        for (image, _) in chunk {
            match mope {
                None => images.push(image.clone()),
                Some(m) => images.push(m.preprocess(image)?.0),
            }
        }
        let labels: Vec<usize> = chunk.iter().map(|(_, l)| *l).collect();
        let logits = net.forward(params, &Tensor::stack(&images)?)?;
        let acc = crate::evalkit::classification_accuracy(&logits, &labels)?;
        correct += (acc * chunk.len() as f64).round() as usize;
    }
    Ok(correct as f64 / items.len() as f64)
}

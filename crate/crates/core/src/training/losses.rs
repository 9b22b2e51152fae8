//! Training objectives. Reductions run at f64 so the loss fixtures are
//! exact; gradients come back as f32 tensors matching the map shapes.

use crate::error::{MopeError, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped into [CLAMP, 1 - CLAMP] before any log.
pub const CLAMP: f64 = 1e-7;

#[inline]
fn clamp01(v: f32) -> f64 {
    (v as f64).clamp(CLAMP, 1.0 - CLAMP)
}

/// mean(-ln m) over a patch map, plus its gradient wrt the map.
pub fn log_loss_real(map: &Tensor) -> (f64, Tensor) {
    let m = map.numel() as f64;
    let mut loss = 0.0f64;
    let mut grad = map.clone();
    for g in grad.data_mut() {
        let p = clamp01(*g);
        loss -= p.ln();
        *g = (-1.0 / (m * p)) as f32;
    }
    (loss / m, grad)
}

/// mean(-ln(1 - m)) over a patch map, plus its gradient wrt the map.
pub fn log_loss_fake(map: &Tensor) -> (f64, Tensor) {
    let m = map.numel() as f64;
    let mut loss = 0.0f64;
    let mut grad = map.clone();
    for g in grad.data_mut() {
        let p = clamp01(*g);
        loss -= (1.0 - p).ln();
        *g = (1.0 / (m * (1.0 - p))) as f32;
    }
    (loss / m, grad)
}

/// Adversarial objective over the discriminator's patch maps. The log
/// applies per patch and is then averaged. Returns (loss_d, loss_g) where
/// loss_d = -log D(x) - log(1 - D(G(y))) and loss_g is the non-saturating
/// generator form -log D(G(y)).
pub fn gan_loss(d_on_real: &Tensor, d_on_fake: &Tensor) -> (f64, f64) {
    let (real_term, _) = log_loss_real(d_on_real);
    let (fake_term, _) = log_loss_fake(d_on_fake);
    let (gen_term, _) = log_loss_real(d_on_fake);
    (real_term + fake_term, gen_term)
}

/// Mean squared difference over all elements.
pub fn sim_loss(denoised: &Tensor, clean: &Tensor) -> Result<f64> {
    crate::evalkit::mse(denoised, clean)
}

/// Gradient of `sim_loss` wrt the denoised tensor: 2 (denoised - clean) / N.
pub fn sim_loss_grad(denoised: &Tensor, clean: &Tensor) -> Result<Tensor> {
    if denoised.shape() != clean.shape() {
        return Err(MopeError::Shape(format!(
            "sim_loss: denoised {} vs clean {}",
            denoised.shape(),
            clean.shape()
        )));
    }
    let n = denoised.numel() as f32;
    let data = denoised
        .data()
        .iter()
        .zip(clean.data())
        .map(|(&d, &c)| 2.0 * (d - c) / n)
        .collect();
    Tensor::from_vec(denoised.shape(), data)
}

/// Combined generator objective: adversarial term plus lambda times the
/// similarity term.
pub fn total_loss(loss_gan_g: f64, loss_sim: f64, lambda: f64) -> f64 {
    loss_gan_g + lambda * loss_sim
}

/// Gating objective on per-image scores: -log H(x) - log(1 - H(F(x))).
pub fn gate_loss(h_on_clean: f64, h_on_noisy: f64) -> f64 {
    let c = h_on_clean.clamp(CLAMP, 1.0 - CLAMP);
    let n = h_on_noisy.clamp(CLAMP, 1.0 - CLAMP);
    -c.ln() - (1.0 - n).ln()
}

/// Batch gating loss over patch maps. Each image's score is the mean of
/// its patch map; the log applies to the score (not per patch). Returns
/// the mean loss over pairs and the gradients wrt both map tensors.
pub fn gate_loss_batch(clean_maps: &Tensor, noisy_maps: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let b = clean_maps.shape().n;
    if noisy_maps.shape().n != b {
        return Err(MopeError::Shape(format!(
            "gate loss: {} clean maps vs {} noisy maps",
            b,
            noisy_maps.shape().n
        )));
    }
    if b == 0 {
        return Err(MopeError::InvalidArgument("gate loss: empty batch".into()));
    }
    let per_clean = clean_maps.numel() / b;
    let per_noisy = noisy_maps.numel() / b;
    let mut loss = 0.0f64;
    let mut grad_clean = Tensor::zeros(clean_maps.shape());
    let mut grad_noisy = Tensor::zeros(noisy_maps.shape());
    for k in 0..b {
        let cmap = &clean_maps.data()[k * per_clean..(k + 1) * per_clean];
        let nmap = &noisy_maps.data()[k * per_noisy..(k + 1) * per_noisy];
        let s: f64 = cmap.iter().map(|&v| v as f64).sum::<f64>() / per_clean as f64;
        let t: f64 = nmap.iter().map(|&v| v as f64).sum::<f64>() / per_noisy as f64;
        let s = s.clamp(CLAMP, 1.0 - CLAMP);
        let t = t.clamp(CLAMP, 1.0 - CLAMP);
        loss += -s.ln() - (1.0 - t).ln();
        // d/d patch = (dL/ds) * (1/m), batch-mean folded in
        let gc = (-1.0 / (b as f64 * s * per_clean as f64)) as f32;
        let gn = (1.0 / (b as f64 * (1.0 - t) * per_noisy as f64)) as f32;
        grad_clean.data_mut()[k * per_clean..(k + 1) * per_clean].fill(gc);
        grad_noisy.data_mut()[k * per_noisy..(k + 1) * per_noisy].fill(gn);
    }
    Ok((loss / b as f64, grad_clean, grad_noisy))
}

/// Softmax cross-entropy over logits shaped (n, classes, 1, 1). Returns the
/// mean loss and its gradient wrt the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.shape().n;
    if n != labels.len() {
        return Err(MopeError::Shape(format!(
            "cross_entropy: {} logit rows vs {} labels",
            n,
            labels.len()
        )));
    }
    if n == 0 {
        return Err(MopeError::InvalidArgument("cross_entropy: empty batch".into()));
    }
    let classes = logits.numel() / n;
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(logits.shape());
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(MopeError::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = &logits.data()[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v as f64 - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += log_denom - row[label] as f64;
        let grow = &mut grad.data_mut()[i * classes..(i + 1) * classes];
        for (j, g) in grow.iter_mut().enumerate() {
            let p = ((row[j] as f64 - max).exp() / denom) as f32;
            *g = (p - if j == label { 1.0 } else { 0.0 }) / n as f32;
        }
    }
    Ok((loss / n as f64, grad))
}

//! The four concrete networks: denoiser G, gating network H, discriminator
//! D, and the small proxy classifier standing in for the downstream task
//! network.

use crate::graph::{LayerSpec, NetworkSpec};
use crate::tensor::Activation;

const LEAKY_SLOPE: f32 = 0.2;

/// Encoder-decoder denoiser with additive skip connections.
///
/// An average filter sits at the front to knock down the random noise; the
/// conv stack then restores the edge detail. Filter counts double at each
/// stride-2 downsampling step (16 -> 32 -> 64) and halve on the way back
/// up, and the output sigmoid keeps values in (0, 1).
pub fn build_denoiser() -> NetworkSpec {
    NetworkSpec {
        name: "denoiser".into(),
        input_channels: 3,
        layers: vec![
            // 0
            LayerSpec::BoxFilter,
            // 1
            LayerSpec::Conv { in_ch: 3, out_ch: 16, kernel: 3, stride: 1, pad: 1 },
            // 2
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 3
            LayerSpec::Conv { in_ch: 16, out_ch: 32, kernel: 3, stride: 2, pad: 1 },
            // 4
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 5
            LayerSpec::Conv { in_ch: 32, out_ch: 64, kernel: 3, stride: 2, pad: 1 },
            // 6
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 7: back up to the 32-channel stage, matching its spatial size
            LayerSpec::ConvTranspose {
                in_ch: 64,
                out_ch: 32,
                kernel: 3,
                stride: 2,
                pad: 1,
                match_size_of: Some(4),
            },
            // 8
            LayerSpec::AddSkip { from: 4 },
            // 9
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 10
            LayerSpec::ConvTranspose {
                in_ch: 32,
                out_ch: 16,
                kernel: 3,
                stride: 2,
                pad: 1,
                match_size_of: Some(2),
            },
            // 11
            LayerSpec::AddSkip { from: 2 },
            // 12
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 13
            LayerSpec::Conv { in_ch: 16, out_ch: 3, kernel: 3, stride: 1, pad: 1 },
            // 14
            LayerSpec::Activation(Activation::Sigmoid),
        ],
    }
}

/// Patch-scoring gating network: three stride-2 3x3 convs with instance
/// norm, one stride-1 conv down to a single channel, sigmoid output. The
/// receptive field works out to 31x31, enough to spot Gaussian noise
/// locally without a deep stack.
pub fn build_gating() -> NetworkSpec {
    patch_scorer("gating")
}

/// Discriminator for the adversarial denoiser training. The architecture
/// reuses the gating topology (both are small patch-level real/fake
/// classifiers) with its own independent parameters.
pub fn build_discriminator() -> NetworkSpec {
    patch_scorer("discriminator")
}

fn patch_scorer(name: &str) -> NetworkSpec {
    NetworkSpec {
        name: name.into(),
        input_channels: 3,
        layers: vec![
            // 0
            LayerSpec::Conv { in_ch: 3, out_ch: 16, kernel: 3, stride: 2, pad: 1 },
            // 1
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 2
            LayerSpec::Conv { in_ch: 16, out_ch: 32, kernel: 3, stride: 2, pad: 1 },
            // 3
            LayerSpec::InstanceNorm { channels: 32 },
            // 4
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 5
            LayerSpec::Conv { in_ch: 32, out_ch: 64, kernel: 3, stride: 2, pad: 1 },
            // 6
            LayerSpec::InstanceNorm { channels: 64 },
            // 7
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            // 8
            LayerSpec::Conv { in_ch: 64, out_ch: 1, kernel: 3, stride: 1, pad: 1 },
            // 9
            LayerSpec::Activation(Activation::Sigmoid),
        ],
    }
}

/// Small convolutional classifier for 64x64 inputs: three stride-2 conv
/// blocks, global average pooling, then a 1x1 conv acting as the linear
/// map to `num_classes` logits.
pub fn build_classifier(num_classes: usize) -> NetworkSpec {
    assert!(num_classes >= 2, "classifier needs at least two classes");
    NetworkSpec {
        name: "classifier".into(),
        input_channels: 3,
        layers: vec![
            LayerSpec::Conv { in_ch: 3, out_ch: 16, kernel: 3, stride: 2, pad: 1 },
            LayerSpec::Activation(Activation::Relu),
            LayerSpec::Conv { in_ch: 16, out_ch: 32, kernel: 3, stride: 2, pad: 1 },
            LayerSpec::Activation(Activation::Relu),
            LayerSpec::Conv { in_ch: 32, out_ch: 64, kernel: 3, stride: 2, pad: 1 },
            LayerSpec::Activation(Activation::Relu),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Conv { in_ch: 64, out_ch: num_classes, kernel: 1, stride: 1, pad: 0 },
        ],
    }
}

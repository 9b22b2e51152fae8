//! Inference-time mixture: run the gating network on an image, then route
//! it through exactly one pre-processing expert. Clean images pass through
//! bit-exactly; there is no blending.

use crate::error::{MopeError, Result};
use crate::graph::{Network, ParamStore};
use crate::tensor::{box_filter3, Tensor};

/// The three pre-processing experts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertKind {
    Identity,
    AverageFilter,
    Denoiser,
}

impl ExpertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpertKind::Identity => "identity",
            ExpertKind::AverageFilter => "average_filter",
            ExpertKind::Denoiser => "denoiser",
        }
    }
}

/// Which expert handles images the gate flags as noisy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisyExpert {
    AverageFilter,
    Denoiser,
}

impl NoisyExpert {
    fn expert(self) -> ExpertKind {
        match self {
            NoisyExpert::AverageFilter => ExpertKind::AverageFilter,
            NoisyExpert::Denoiser => ExpertKind::Denoiser,
        }
    }
}

/// Routing policy.
#[derive(Debug, Clone, Copy)]
pub struct MopeConfig {
    /// Scores above the threshold take the clean (identity) path; a score
    /// exactly at the threshold routes to the noisy expert.
    pub threshold: f32,
    pub noisy_expert: NoisyExpert,
}

impl MopeConfig {
    pub fn new(threshold: f32, noisy_expert: NoisyExpert) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(MopeError::InvalidArgument(format!(
                "threshold must lie in (0, 1), got {threshold}"
            )));
        }
        Ok(MopeConfig {
            threshold,
            noisy_expert,
        })
    }
}

impl Default for MopeConfig {
    fn default() -> Self {
        MopeConfig {
            threshold: 0.5,
            noisy_expert: NoisyExpert::Denoiser,
        }
    }
}

/// Outcome of gating one image.
#[derive(Debug, Clone)]
pub struct GateDecision {
    /// Mean of the gate's patch map.
    pub score: f32,
    pub chosen_expert: ExpertKind,
    /// (min, mean, max) over the patch map.
    pub patch_map_stats: (f32, f32, f32),
}

/// The assembled mixture: gate plus experts.
pub struct Mope {
    gate: Network,
    gate_params: ParamStore,
    denoiser: Network,
    denoiser_params: ParamStore,
    config: MopeConfig,
}

impl Mope {
    pub fn new(
        gate: Network,
        gate_params: ParamStore,
        denoiser: Network,
        denoiser_params: ParamStore,
        config: MopeConfig,
    ) -> Result<Self> {
        gate.check_params(&gate_params)?;
        denoiser.check_params(&denoiser_params)?;
        Ok(Mope {
            gate,
            gate_params,
            denoiser,
            denoiser_params,
            config,
        })
    }

    pub fn config(&self) -> MopeConfig {
        self.config
    }

    pub fn gate_params(&self) -> &ParamStore {
        &self.gate_params
    }

    pub fn denoiser_params(&self) -> &ParamStore {
        &self.denoiser_params
    }

    /// Score one image and pick its expert. The score is the mean of the
    /// gate's patch map; scores above the threshold mean "clean".
    pub fn gate_decide(&self, image: &Tensor) -> Result<GateDecision> {
        let map = self.gate.forward(&self.gate_params, image)?;
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        let mut sum = 0.0f64;
        for &v in map.data() {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v as f64;
        }
        let score = (sum / map.numel() as f64) as f32;
        let chosen_expert = if score > self.config.threshold {
            ExpertKind::Identity
        } else {
            self.config.noisy_expert.expert()
        };
        Ok(GateDecision {
            score,
            chosen_expert,
            patch_map_stats: (lo, score, hi),
        })
    }

    /// Run one expert unconditionally.
    pub fn apply_expert(&self, expert: ExpertKind, image: &Tensor) -> Result<Tensor> {
        match expert {
            ExpertKind::Identity => Ok(image.clone()),
            ExpertKind::AverageFilter => Ok(box_filter3(image)),
            ExpertKind::Denoiser => self.denoiser.forward(&self.denoiser_params, image),
        }
    }

    /// Gate the image and run the selected expert. The identity route
    /// returns the input bit-exactly.
    pub fn preprocess(&self, image: &Tensor) -> Result<(Tensor, GateDecision)> {
        let decision = self.gate_decide(image)?;
        let out = self.apply_expert(decision.chosen_expert, image)?;
        Ok((out, decision))
    }

    /// Route every image independently; decisions come back for logging.
    pub fn preprocess_batch(&self, images: &[Tensor]) -> Result<(Vec<Tensor>, Vec<GateDecision>)> {
        let mut outs = Vec::with_capacity(images.len());
        let mut decisions = Vec::with_capacity(images.len());
        for image in images {
            let (out, decision) = self.preprocess(image)?;
            outs.push(out);
            decisions.push(decision);
        }
        Ok((outs, decisions))
    }
}

/// Decision log rows: image id, score, chosen expert.
pub fn decisions_to_csv(ids: &[String], decisions: &[GateDecision]) -> String {
    let mut out = String::from("image,score,expert\n");
    for (id, d) in ids.iter().zip(decisions) {
        out.push_str(&format!("{},{:.6},{}\n", id, d.score, d.chosen_expert.as_str()));
    }
    out
}

//! Deterministic synthetic image generator: ten shape/texture classes with
//! randomized position, scale, rotation and color on smooth gradient
//! backgrounds. Serves as the hermetic stand-in for photographic datasets.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::{MopeError, Result};
use crate::ppm::{read_ppm, write_ppm};
use crate::tensor::{Shape, Tensor};
use crate::MopeRng;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub image_size: usize,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 10,
            image_size: 64,
            samples_per_class: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 10 {
            return Err(MopeError::InvalidArgument(format!(
                "num_classes must be in 2..=10, got {}",
                self.num_classes
            )));
        }
        if self.image_size < 16 {
            return Err(MopeError::InvalidArgument(format!(
                "image_size must be at least 16, got {}",
                self.image_size
            )));
        }
        if self.samples_per_class == 0 {
            return Err(MopeError::InvalidArgument(
                "samples_per_class must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Heldout,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Heldout => "heldout",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "heldout" => Some(Split::Heldout),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: u32,
    pub label: usize,
    pub split: Split,
    pub image: Tensor,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<LabeledImage>,
    pub num_classes: usize,
    pub image_size: usize,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &LabeledImage> {
        self.items.iter().filter(|i| i.split == Split::Train)
    }

    pub fn heldout(&self) -> impl Iterator<Item = &LabeledImage> {
        self.items.iter().filter(|i| i.split == Split::Heldout)
    }

    /// Persist as manifest.csv plus one PPM per image.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images)?;
        let mut manifest = String::from("id,label,split\n");
        for item in &self.items {
            manifest.push_str(&format!(
                "{:05},{},{}\n",
                item.id,
                item.label,
                item.split.as_str()
            ));
            write_ppm(&item.image, &images.join(format!("{:05}.ppm", item.id)))?;
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(dir.join("manifest.csv"))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| MopeError::Parse("manifest.csv is empty".into()))?;
        if header.trim() != "id,label,split" {
            return Err(MopeError::Parse(format!(
                "manifest header must be id,label,split; got {header:?}"
            )));
        }
        let mut items = Vec::new();
        let mut num_classes = 0;
        let mut image_size = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(MopeError::Parse(format!("bad manifest row {line:?}")));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| MopeError::Parse(format!("bad id {:?}", fields[0])))?;
            let label: usize = fields[1]
                .parse()
                .map_err(|_| MopeError::Parse(format!("bad label {:?}", fields[1])))?;
            let split = Split::parse(fields[2])
                .ok_or_else(|| MopeError::Parse(format!("bad split {:?}", fields[2])))?;
            let image = read_ppm(&dir.join("images").join(format!("{id:05}.ppm")))?;
            num_classes = num_classes.max(label + 1);
            image_size = image.shape().h;
            items.push(LabeledImage {
                id,
                label,
                split,
                image,
            });
        }
        Ok(Dataset {
            items,
            num_classes,
            image_size,
        })
    }
}

/// Smoothstep-style soft edge: 1 inside, 0 outside, ~1px transition.
fn soft(inside_by: f32) -> f32 {
    (0.5 + inside_by).clamp(0.0, 1.0)
}

struct Scene {
    cx: f32,
    cy: f32,
    radius: f32,
    cos_t: f32,
    sin_t: f32,
    stripe_freq: f32,
}

impl Scene {
    fn local(&self, x: f32, y: f32) -> (f32, f32) {
        let dx = x - self.cx;
        let dy = y - self.cy;
        (
            dx * self.cos_t + dy * self.sin_t,
            -dx * self.sin_t + dy * self.cos_t,
        )
    }
}

/// Shape coverage in [0, 1] for class `label` at pixel (x, y).
fn coverage(label: usize, scene: &Scene, x: f32, y: f32) -> f32 {
    let (px, py) = scene.local(x, y);
    let r = scene.radius;
    let d = (px * px + py * py).sqrt();
    match label {
        // disk
        0 => soft(r - d),
        // square
        1 => soft(r * 0.95 - px.abs().max(py.abs())),
        // triangle (pointing up in the local frame)
        2 => {
            let e1 = py + r * 0.55;
            let e2 = r * 0.55 - 0.5 * py + 0.866 * px;
            let e3 = r * 0.55 - 0.5 * py - 0.866 * px;
            soft(e1.min(e2).min(e3) * 1.3)
        }
        // ring
        3 => soft(r - d).min(soft(d - 0.55 * r)),
        // plus sign
        4 => {
            let arm = 0.34 * r;
            let horiz = soft(arm - py.abs()).min(soft(r - px.abs()));
            let vert = soft(arm - px.abs()).min(soft(r - py.abs()));
            horiz.max(vert)
        }
        // diagonal cross: plus rotated 45 degrees in the local frame
        5 => {
            let s = std::f32::consts::FRAC_1_SQRT_2;
            let qx = px * s + py * s;
            let qy = -px * s + py * s;
            let arm = 0.34 * r;
            let a = soft(arm - qy.abs()).min(soft(r - qx.abs()));
            let b = soft(arm - qx.abs()).min(soft(r - qy.abs()));
            a.max(b)
        }
        // horizontal stripes inside a disk
        6 => {
            let stripe = 0.5 + 0.5 * (py * scene.stripe_freq).sin().signum();
            soft(r - d) * stripe
        }
        // vertical stripes inside a disk
        7 => {
            let stripe = 0.5 + 0.5 * (px * scene.stripe_freq).sin().signum();
            soft(r - d) * stripe
        }
        // checkerboard inside a disk
        8 => {
            let f = scene.stripe_freq;
            let check = if (px * f).sin() * (py * f).sin() > 0.0 { 1.0 } else { 0.0 };
            soft(r - d) * check
        }
        // two small disks along the local x axis
        9 => {
            let off = 0.55 * r;
            let d1 = ((px - off).powi(2) + py * py).sqrt();
            let d2 = ((px + off).powi(2) + py * py).sqrt();
            soft(0.5 * r - d1).max(soft(0.5 * r - d2))
        }
        _ => 0.0,
    }
}

fn render(label: usize, size: usize, rng: &mut MopeRng) -> Tensor {
    let s = size as f32;
    // background: smooth two-corner gradient
    let bg_a: [f32; 3] = [
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
    ];
    let bg_b: [f32; 3] = [
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
    ];
    // shape color, pushed away from the mean background so classes stay
    // learnable on clean images at moderate contrast
    let bg_mean: [f32; 3] = [
        (bg_a[0] + bg_b[0]) / 2.0,
        (bg_a[1] + bg_b[1]) / 2.0,
        (bg_a[2] + bg_b[2]) / 2.0,
    ];
    let mut fg = [0.0f32; 3];
    let sign: f32 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    for c in 0..3 {
        let contrast = rng.random_range(0.28..0.5);
        fg[c] = (bg_mean[c] + sign * contrast).clamp(0.02, 0.98);
    }
    let theta = rng.random_range(-0.3f32..0.3);
    let scene = Scene {
        cx: rng.random_range(0.38 * s..0.62 * s),
        cy: rng.random_range(0.38 * s..0.62 * s),
        radius: rng.random_range(0.22 * s..0.30 * s),
        cos_t: theta.cos(),
        sin_t: theta.sin(),
        // stripe period lands around 8-11 px so the texture survives a 4x
        // low-resolution round trip
        stripe_freq: rng.random_range(1.1..1.6) * std::f32::consts::PI / (0.10 * s),
    };
    Tensor::from_fn(Shape::new(1, 3, size, size), |_, c, y, x| {
        let fx = x as f32 / s;
        let fy = y as f32 / s;
        let t = 0.5 * (fx + fy);
        let bg = bg_a[c] * (1.0 - t) + bg_b[c] * t;
        let alpha = coverage(label, &scene, x as f32 + 0.5, y as f32 + 0.5);
        (bg * (1.0 - alpha) + fg[c] * alpha).clamp(0.0, 1.0)
    })
}

/// Generate the dataset: exact class balance, per-class 80/20 train/heldout
/// split, everything derived from the seed.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut items = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    let train_per_class = (cfg.samples_per_class * 4) / 5;
    let mut id = 0u32;
    for label in 0..cfg.num_classes {
        for i in 0..cfg.samples_per_class {
            // one generator per sample keeps output order-stable even if
            // rendering is ever parallelized
            let sample_seed = cfg
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((label * cfg.samples_per_class + i) as u64);
            let mut rng = MopeRng::seed_from_u64(sample_seed);
            let image = render(label, cfg.image_size, &mut rng);
            items.push(LabeledImage {
                id,
                label,
                split: if i < train_per_class {
                    Split::Train
                } else {
                    Split::Heldout
                },
                image,
            });
            id += 1;
        }
    }
    Ok(Dataset {
        items,
        num_classes: cfg.num_classes,
        image_size: cfg.image_size,
    })
}

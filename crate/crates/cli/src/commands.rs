//! Implementations of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use mope_core::complexity::{count_flops, count_params, receptive_field, reference};
use mope_core::distortion::{add_gaussian_noise, lowres_roundtrip, DistortionConfig};
use mope_core::evalkit::{mse, psnr};
use mope_core::graph::{Network, NetworkSpec, ParamStore};
use mope_core::models::{build_classifier, build_denoiser, build_discriminator, build_gating};
use mope_core::ppm::{read_ppm, write_ppm};
use mope_core::router::{decisions_to_csv, Mope, MopeConfig, NoisyExpert};
use mope_core::synth::{generate, Dataset, SynthConfig};
use mope_core::tensor::Tensor;
use mope_core::training::{
    denoiser_history_csv, evaluate_classifier, history_csv, train_classifier as core_train_classifier,
    train_denoiser as core_train_denoiser, train_gate as core_train_gate, Augmentation,
    LabeledStream, OptimizerKind, PairStream, TrainConfig,
};
use mope_core::weights::{load_weights, save_weights};
use mope_core::{rng_from_seed, MopeError, Result};

use crate::config::{resolve, FileConfig, Resolved};
use crate::{CommonArgs, TrainFlags};

pub const GATE_WEIGHTS: &str = "gate.mope";
pub const DISCRIMINATOR_WEIGHTS: &str = "discriminator.mope";
pub const DENOISER_WEIGHTS: &str = "denoiser.mope";
pub const CLASSIFIER_CLEAN_WEIGHTS: &str = "classifier_clean.mope";
pub const CLASSIFIER_AUGMENTED_WEIGHTS: &str = "classifier_augmented.mope";
pub const CLASSIFIER_MOPE_AVG_WEIGHTS: &str = "classifier_mope_avg.mope";
pub const CLASSIFIER_MOPE_DENOISE_WEIGHTS: &str = "classifier_mope_denoise.mope";

fn file_config(common: &CommonArgs) -> Result<FileConfig> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn resolve_out_dir(common: &CommonArgs, file: &FileConfig, resolved: &mut Resolved) -> PathBuf {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| file.get("out_dir").map(PathBuf::from))
        .or_else(|| std::env::var_os("MOPE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mope-out"));
    resolved.set("out_dir", dir.display());
    dir
}

fn parse_factors(raw: &str) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(vec![]);
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| MopeError::Parse(format!("bad low-res factor {s:?}")))
        })
        .collect()
}

struct Pools {
    /// clean training images
    train_images: Vec<Tensor>,
    train_labeled: Vec<(Tensor, usize)>,
    heldout_labeled: Vec<(Tensor, usize)>,
}

fn load_pools(data_dir: &Path) -> Result<Pools> {
    let dataset = Dataset::load(data_dir)?;
    Ok(Pools {
        train_images: dataset.train().map(|i| i.image.clone()).collect(),
        train_labeled: dataset.train().map(|i| (i.image.clone(), i.label)).collect(),
        heldout_labeled: dataset
            .heldout()
            .map(|i| (i.image.clone(), i.label))
            .collect(),
    })
}

/// Accept either a weight file or a directory holding `name`.
fn weights_file(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn load_network(spec: NetworkSpec, path: &Path) -> Result<(Network, ParamStore)> {
    let (net, _) = Network::build(spec, 0)?;
    let params = load_weights(path)?;
    net.check_params(&params)?;
    Ok((net, params))
}

fn parse_noisy_expert(raw: &str) -> Result<NoisyExpert> {
    match raw {
        "avg" => Ok(NoisyExpert::AverageFilter),
        "denoise" => Ok(NoisyExpert::Denoiser),
        other => Err(MopeError::Parse(format!(
            "noisy_expert must be avg or denoise, got {other:?}"
        ))),
    }
}

fn build_mope(weights_dir: &Path, threshold: f32, expert: NoisyExpert) -> Result<Mope> {
    let (gate, gate_params) = load_network(build_gating(), &weights_dir.join(GATE_WEIGHTS))?;
    let (den, den_params) = load_network(build_denoiser(), &weights_dir.join(DENOISER_WEIGHTS))?;
    Mope::new(
        gate,
        gate_params,
        den,
        den_params,
        MopeConfig::new(threshold, expert)?,
    )
}

pub fn gen_data(
    common: CommonArgs,
    num_classes: Option<usize>,
    image_size: Option<usize>,
    samples_per_class: Option<usize>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut resolved = Resolved::default();
    let out_dir = resolve_out_dir(&common, &file, &mut resolved);
    let cfg = SynthConfig {
        num_classes: resolve(num_classes, &file, "num_classes", 10, &mut resolved)?,
        image_size: resolve(image_size, &file, "image_size", 64, &mut resolved)?,
        samples_per_class: resolve(samples_per_class, &file, "samples_per_class", 150, &mut resolved)?,
        seed: resolve(common.seed, &file, "seed", 0, &mut resolved)?,
    };
    let dataset = generate(&cfg)?;
    dataset.save(&out_dir)?;
    resolved.snapshot(&out_dir)?;
    let train = dataset.train().count();
    let held = dataset.heldout().count();
    println!(
        "wrote {} images ({} train, {} heldout) to {}",
        dataset.items.len(),
        train,
        held,
        out_dir.display()
    );
    Ok(())
}

struct TrainSettings {
    cfg: TrainConfig,
    dist: DistortionConfig,
    out_dir: PathBuf,
    resolved: Resolved,
}

fn resolve_training(
    common: &CommonArgs,
    train: &TrainFlags,
    defaults: (usize, usize, f32),
    optimizer: OptimizerKind,
    lr_schedule: Vec<(usize, f32)>,
) -> Result<TrainSettings> {
    let file = file_config(common)?;
    let mut resolved = Resolved::default();
    let out_dir = resolve_out_dir(common, &file, &mut resolved);
    let (def_iters, def_batch, def_lr) = defaults;
    let seed = resolve(common.seed, &file, "seed", 0, &mut resolved)?;
    let cfg = TrainConfig {
        iterations: resolve(train.iterations, &file, "iterations", def_iters, &mut resolved)?,
        batch_size: resolve(train.batch_size, &file, "batch_size", def_batch, &mut resolved)?,
        learning_rate: resolve(train.lr, &file, "lr", def_lr, &mut resolved)?,
        lr_schedule,
        optimizer,
        lambda_sim: 1.0,
        seed,
    };
    let max_sigma = resolve(train.max_sigma, &file, "max_sigma", 0.15, &mut resolved)?;
    let factors_raw = resolve(
        train.lowres_factors.clone(),
        &file,
        "lowres_factors",
        "2,4".to_string(),
        &mut resolved,
    )?;
    let dist = DistortionConfig {
        max_sigma,
        lowres_factors: parse_factors(&factors_raw)?,
        seed,
    };
    Ok(TrainSettings {
        cfg,
        dist,
        out_dir,
        resolved,
    })
}

pub fn train_gate(common: CommonArgs, train: TrainFlags, data: PathBuf) -> Result<()> {
    let s = resolve_training(&common, &train, (600, 16, 1e-3), OptimizerKind::adam_default(), vec![])?;
    let pools = load_pools(&data)?;
    let (gate, mut params) = Network::build(build_gating(), s.cfg.seed)?;
    let mut stream = PairStream::new(&pools.train_images, s.dist.clone(), s.cfg.seed);
    let history = core_train_gate(&gate, &mut params, &mut stream, &s.cfg)?;

    fs::create_dir_all(&s.out_dir)?;
    save_weights(&params, &s.out_dir.join(GATE_WEIGHTS))?;
    fs::write(s.out_dir.join("gate_history.csv"), history_csv(&history))?;
    s.resolved.snapshot(&s.out_dir)?;

    // heldout accuracy: clean scores above 0.5, max-sigma noise below
    let mut rng = rng_from_seed(s.cfg.seed ^ 0xe7a1);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (img, _) in &pools.heldout_labeled {
        let clean_score = gate.forward(&params, img)?.mean();
        let noisy = add_gaussian_noise(img, s.dist.max_sigma, &mut rng)?;
        let noisy_score = gate.forward(&params, &noisy)?.mean();
        correct += usize::from(clean_score > 0.5) + usize::from(noisy_score <= 0.5);
        total += 2;
    }
    println!(
        "gate: final loss {:.4}, heldout accuracy {:.3} ({}/{})",
        history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        correct as f64 / total as f64,
        correct,
        total
    );
    Ok(())
}

pub fn train_denoiser(common: CommonArgs, train: TrainFlags, data: PathBuf) -> Result<()> {
    let s = resolve_training(&common, &train, (1200, 8, 2e-4), OptimizerKind::adam_default(), vec![])?;
    let pools = load_pools(&data)?;
    let (gen, mut gen_params) = Network::build(build_denoiser(), s.cfg.seed)?;
    let (disc, mut disc_params) = Network::build(build_discriminator(), s.cfg.seed.wrapping_add(1))?;
    let mut stream = PairStream::new(&pools.train_images, s.dist.clone(), s.cfg.seed);
    let history =
        core_train_denoiser(&gen, &mut gen_params, &disc, &mut disc_params, &mut stream, &s.cfg)?;

    fs::create_dir_all(&s.out_dir)?;
    save_weights(&gen_params, &s.out_dir.join(DENOISER_WEIGHTS))?;
    save_weights(&disc_params, &s.out_dir.join(DISCRIMINATOR_WEIGHTS))?;
    fs::write(
        s.out_dir.join("denoiser_history.csv"),
        denoiser_history_csv(&history),
    )?;
    s.resolved.snapshot(&s.out_dir)?;

    // heldout fidelity at max sigma
    let mut rng = rng_from_seed(s.cfg.seed ^ 0xe7a1);
    let mut noisy_mse = 0.0;
    let mut den_mse = 0.0;
    let n = pools.heldout_labeled.len().max(1);
    for (img, _) in &pools.heldout_labeled {
        let noisy = add_gaussian_noise(img, s.dist.max_sigma, &mut rng)?;
        let den = gen.forward(&gen_params, &noisy)?;
        noisy_mse += mse(&noisy, img)?;
        den_mse += mse(&den, img)?;
    }
    println!(
        "denoiser: heldout mse noisy {:.5} -> denoised {:.5} ({:.1}% reduction) at sigma {}",
        noisy_mse / n as f64,
        den_mse / n as f64,
        100.0 * (1.0 - den_mse / noisy_mse),
        s.dist.max_sigma
    );
    Ok(())
}

pub fn train_classifier(
    common: CommonArgs,
    train: TrainFlags,
    data: PathBuf,
    mode: Option<String>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut premode = Resolved::default();
    let mode = resolve(mode, &file, "mode", "clean".to_string(), &mut premode)?;
    let mut s = resolve_training(
        &common,
        &train,
        (4000, 32, 1e-3),
        OptimizerKind::adam_default(),
        vec![(2500, 10.0)],
    )?;
    s.resolved.set("mode", &mode);
    let pools = load_pools(&data)?;
    let dataset = Dataset::load(&data)?;
    let (net, mut params) = Network::build(build_classifier(dataset.num_classes), s.cfg.seed)?;
    let augmentation = match mode.as_str() {
        "clean" => Augmentation::None,
        "augmented" => Augmentation::Distort(s.dist.clone()),
        other => {
            return Err(MopeError::Parse(format!(
                "mode must be clean or augmented, got {other:?}"
            )))
        }
    };
    let mut stream = LabeledStream::new(&pools.train_labeled, augmentation, s.cfg.seed);
    let history = core_train_classifier(&net, &mut params, &mut stream, None, &s.cfg)?;

    fs::create_dir_all(&s.out_dir)?;
    let name = if mode == "clean" {
        CLASSIFIER_CLEAN_WEIGHTS
    } else {
        CLASSIFIER_AUGMENTED_WEIGHTS
    };
    save_weights(&params, &s.out_dir.join(name))?;
    fs::write(
        s.out_dir.join(format!("classifier_{mode}_history.csv")),
        history_csv(&history),
    )?;
    s.resolved.snapshot(&s.out_dir)?;

    let acc = evaluate_classifier(&net, &params, &pools.heldout_labeled, None)?;
    println!(
        "classifier ({mode}): final loss {:.4}, heldout clean accuracy {:.3}",
        history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        acc
    );
    Ok(())
}

pub fn finetune_mope(
    common: CommonArgs,
    train: TrainFlags,
    data: PathBuf,
    weights: PathBuf,
    noisy_expert: Option<String>,
    threshold: Option<f32>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut pre = Resolved::default();
    let expert_raw = resolve(noisy_expert, &file, "noisy_expert", "denoise".to_string(), &mut pre)?;
    let threshold = resolve(threshold, &file, "threshold", 0.5, &mut pre)?;
    let expert = parse_noisy_expert(&expert_raw)?;
    let mut s = resolve_training(
        &common,
        &train,
        (500, 32, 1e-4),
        OptimizerKind::adam_default(),
        vec![],
    )?;
    s.resolved.set("noisy_expert", &expert_raw);
    s.resolved.set("threshold", threshold);

    let pools = load_pools(&data)?;
    let dataset = Dataset::load(&data)?;
    let mope = build_mope(&weights, threshold, expert)?;
    let (net, _) = Network::build(build_classifier(dataset.num_classes), 0)?;
    let mut params = load_weights(&weights.join(CLASSIFIER_CLEAN_WEIGHTS))?;
    net.check_params(&params)?;

    let mut stream = LabeledStream::new(
        &pools.train_labeled,
        Augmentation::Distort(s.dist.clone()),
        s.cfg.seed,
    );
    let history = core_train_classifier(&net, &mut params, &mut stream, Some(&mope), &s.cfg)?;

    fs::create_dir_all(&s.out_dir)?;
    let name = match expert {
        NoisyExpert::AverageFilter => CLASSIFIER_MOPE_AVG_WEIGHTS,
        NoisyExpert::Denoiser => CLASSIFIER_MOPE_DENOISE_WEIGHTS,
    };
    save_weights(&params, &s.out_dir.join(name))?;
    fs::write(
        s.out_dir.join(format!("finetune_{expert_raw}_history.csv")),
        history_csv(&history),
    )?;
    s.resolved.snapshot(&s.out_dir)?;

    let acc = evaluate_classifier(&net, &params, &pools.heldout_labeled, Some(&mope))?;
    println!(
        "finetuned classifier (mope+{expert_raw}): heldout clean accuracy {:.3}",
        acc
    );
    Ok(())
}

pub fn eval(
    common: CommonArgs,
    data: PathBuf,
    weights: PathBuf,
    sigma: Option<f32>,
    threshold: Option<f32>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut resolved = Resolved::default();
    let out_dir = resolve_out_dir(&common, &file, &mut resolved);
    let seed = resolve(common.seed, &file, "seed", 0, &mut resolved)?;
    let sigma = resolve(sigma, &file, "sigma", 0.15, &mut resolved)?;
    let threshold = resolve(threshold, &file, "threshold", 0.5, &mut resolved)?;

    let pools = load_pools(&data)?;
    let dataset = Dataset::load(&data)?;
    let classes = dataset.num_classes;

    // three heldout variants
    let mut rng = rng_from_seed(seed ^ 0xe7a1);
    let clean = pools.heldout_labeled.clone();
    let lowres: Vec<(Tensor, usize)> = clean
        .iter()
        .map(|(t, l)| Ok((lowres_roundtrip(t, 4)?, *l)))
        .collect::<Result<_>>()?;
    let noisy: Vec<(Tensor, usize)> = clean
        .iter()
        .map(|(t, l)| Ok((add_gaussian_noise(t, sigma, &mut rng)?, *l)))
        .collect::<Result<_>>()?;

    let (net, _) = Network::build(build_classifier(classes), 0)?;
    let load_classifier = |name: &str| -> Result<ParamStore> {
        let params = load_weights(&weights.join(name))?;
        net.check_params(&params)?;
        Ok(params)
    };
    let p_clean = load_classifier(CLASSIFIER_CLEAN_WEIGHTS)?;
    let p_aug = load_classifier(CLASSIFIER_AUGMENTED_WEIGHTS)?;
    let p_avg = load_classifier(CLASSIFIER_MOPE_AVG_WEIGHTS)?;
    let p_den = load_classifier(CLASSIFIER_MOPE_DENOISE_WEIGHTS)?;
    let mope_avg = build_mope(&weights, threshold, NoisyExpert::AverageFilter)?;
    let mope_den = build_mope(&weights, threshold, NoisyExpert::Denoiser)?;

    let mut rows = Vec::new();
    let mut run = |name: &str, params: &ParamStore, mope: Option<&Mope>| -> Result<()> {
        let c = evaluate_classifier(&net, params, &clean, mope)?;
        let l = evaluate_classifier(&net, params, &lowres, mope)?;
        let n = evaluate_classifier(&net, params, &noisy, mope)?;
        rows.push((name.to_string(), c, l, n));
        Ok(())
    };
    run("clean-only", &p_clean, None)?;
    run("augmented", &p_aug, None)?;
    run("mope+avg", &p_avg, Some(&mope_avg))?;
    run("mope+denoise", &p_den, Some(&mope_den))?;

    let mut table = format!(
        "{:<14} {:>7} {:>7} {:>11}\n",
        "model", "clean", "lowres", format!("sigma={sigma}")
    );
    let mut csv = String::from("model,clean,lowres,noisy\n");
    for (name, c, l, n) in &rows {
        table.push_str(&format!("{name:<14} {c:>7.3} {l:>7.3} {n:>11.3}\n"));
        csv.push_str(&format!("{name},{c:.6},{l:.6},{n:.6}\n"));
    }
    print!("{table}");
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("eval.csv"), csv)?;
    resolved.snapshot(&out_dir)?;
    Ok(())
}

pub fn denoise(
    common: CommonArgs,
    weights: PathBuf,
    image: PathBuf,
    sigma: Option<f32>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut resolved = Resolved::default();
    let out_dir = resolve_out_dir(&common, &file, &mut resolved);
    let seed = resolve(common.seed, &file, "seed", 0, &mut resolved)?;
    let sigma = resolve(sigma, &file, "sigma", 0.0, &mut resolved)?;

    let (gen, gen_params) =
        load_network(build_denoiser(), &weights_file(&weights, DENOISER_WEIGHTS))?;
    let original = read_ppm(&image)?;
    let input = if sigma > 0.0 {
        let mut rng = rng_from_seed(seed);
        add_gaussian_noise(&original, sigma, &mut rng)?
    } else {
        original.clone()
    };
    let output = gen.forward(&gen_params, &input)?;

    fs::create_dir_all(&out_dir)?;
    write_ppm(&output, &out_dir.join("denoised.ppm"))?;
    if sigma > 0.0 {
        write_ppm(&input, &out_dir.join("noisy.ppm"))?;
        println!(
            "psnr vs original: noisy {:.2} dB, denoised {:.2} dB",
            psnr(&input, &original, 1.0)?,
            psnr(&output, &original, 1.0)?
        );
    }
    resolved.snapshot(&out_dir)?;
    println!("wrote {}", out_dir.join("denoised.ppm").display());
    Ok(())
}

pub fn route(
    common: CommonArgs,
    weights: PathBuf,
    image: PathBuf,
    threshold: Option<f32>,
    noisy_expert: Option<String>,
) -> Result<()> {
    let file = file_config(&common)?;
    let mut resolved = Resolved::default();
    let out_dir = resolve_out_dir(&common, &file, &mut resolved);
    let threshold = resolve(threshold, &file, "threshold", 0.5, &mut resolved)?;
    let expert_raw = resolve(noisy_expert, &file, "noisy_expert", "denoise".to_string(), &mut resolved)?;
    let expert = parse_noisy_expert(&expert_raw)?;

    let mope = build_mope(&weights, threshold, expert)?;
    let img = read_ppm(&image)?;
    let (out, decision) = mope.preprocess(&img)?;

    fs::create_dir_all(&out_dir)?;
    write_ppm(&out, &out_dir.join("routed.ppm"))?;
    let id = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    fs::write(
        out_dir.join("route_decision.csv"),
        decisions_to_csv(std::slice::from_ref(&id), std::slice::from_ref(&decision)),
    )?;
    resolved.snapshot(&out_dir)?;
    let (lo, mean, hi) = decision.patch_map_stats;
    println!(
        "gate score {:.4} (patch map min {:.4} mean {:.4} max {:.4}) -> {}",
        decision.score,
        lo,
        mean,
        hi,
        decision.chosen_expert.as_str()
    );
    println!("wrote {}", out_dir.join("routed.ppm").display());
    Ok(())
}

pub fn analyze(common: CommonArgs, input_size: Option<usize>) -> Result<()> {
    let file = file_config(&common)?;
    let mut resolved = Resolved::default();
    let size = resolve(input_size, &file, "input_size", 244, &mut resolved)?;

    let denoiser = build_denoiser();
    let gating = build_gating();
    let den_params = count_params(&denoiser);
    let gate_params = count_params(&gating);
    let den_cost = count_flops(&denoiser, size, size)?;
    let gate_cost = count_flops(&gating, size, size)?;

    println!("input size: {size}x{size}\n");
    println!("{:<22} {:>10} {:>10}", "", "denoise", "gating");
    println!(
        "{:<22} {:>10.3} {:>10.3}",
        "# params (MB)",
        den_params.megabytes(),
        gate_params.megabytes()
    );
    println!(
        "{:<22} {:>10} {:>10}",
        "# params (count)", den_params.total, gate_params.total
    );
    println!(
        "{:<22} {:>10.3} {:>10.3}",
        "ops (GMAC)",
        den_cost.gmacs(),
        gate_cost.gmacs()
    );
    println!(
        "{:<22} {:>10.3} {:>10.3}",
        "ops (GFLOP = 2*MAC)",
        den_cost.gflops(),
        gate_cost.gflops()
    );
    println!(
        "{:<22} {:>10} {:>10}",
        "receptive field",
        receptive_field(&denoiser),
        receptive_field(&gating)
    );
    println!(
        "\nreference budgets:   params {:.3} / {:.3} MB, ops {:.3} / {:.3} GFLOP",
        reference::DENOISER_PARAM_MB,
        reference::GATING_PARAM_MB,
        reference::DENOISER_GFLOP,
        reference::GATING_GFLOP
    );
    if size == 244 {
        println!(
            "parameter megabytes match the reference within {:.1}% / {:.1}%",
            100.0 * (den_params.megabytes() - reference::DENOISER_PARAM_MB).abs()
                / reference::DENOISER_PARAM_MB,
            100.0 * (gate_params.megabytes() - reference::GATING_PARAM_MB).abs()
                / reference::GATING_PARAM_MB,
        );
        println!(
            "GFLOP ratio vs reference: {:.2}x / {:.2}x under 2*MAC, {:.2}x / {:.2}x under MAC",
            den_cost.gflops() / reference::DENOISER_GFLOP,
            gate_cost.gflops() / reference::GATING_GFLOP,
            den_cost.gmacs() / reference::DENOISER_GFLOP,
            gate_cost.gmacs() / reference::GATING_GFLOP,
        );
        println!(
            "note: the reference ops figures use an unstated counting convention; both MAC \
             and 2*MAC totals are reported and the discrepancy is expected (see README)"
        );
    }

    if let Some(dir) = common
        .out_dir
        .clone()
        .or_else(|| file.get("out_dir").map(PathBuf::from))
    {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("complexity_denoiser.csv"), den_cost.to_csv())?;
        fs::write(dir.join("complexity_gating.csv"), gate_cost.to_csv())?;
        resolved.set("out_dir", dir.display());
        resolved.snapshot(&dir)?;
        println!("\nper-layer CSVs written to {}", dir.display());
    }
    println!("\nper-layer breakdown (denoiser):\n{}", den_cost.format_table());
    println!("per-layer breakdown (gating):\n{}", gate_cost.format_table());
    Ok(())
}

//! `mope` — batch driver for the mixture-of-preprocessing-experts pipeline.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime/training
//! failure, 3 I/O or weight-file failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mope_core::MopeError;

#[derive(Parser)]
#[command(name = "mope", version, about = "Noise-robust preprocessing: gate, experts, analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command; each one overrides the config-file key of
/// the same name.
#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Flat key=value config file ([section] headers allowed)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all randomness in this command
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $MOPE_OUT_DIR or ./mope-out)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_sigma: Option<f32>,
    /// Comma-separated low-resolution factors, e.g. "2,4"
    #[arg(long)]
    lowres_factors: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic labeled dataset
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        #[arg(long)]
        samples_per_class: Option<usize>,
    },
    /// Adversarial training of the denoising expert
    TrainDenoiser {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Dataset directory produced by gen-data
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the clean/noisy gating network
    TrainGate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the downstream proxy classifier
    TrainClassifier {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        data: PathBuf,
        /// clean (baseline) or augmented (distorted stream)
        #[arg(long, value_parser = ["clean", "augmented"])]
        mode: Option<String>,
    },
    /// Fine-tune a clean classifier behind the frozen mixture
    FinetuneMope {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        data: PathBuf,
        /// Directory with gate.mope, denoiser.mope, classifier_clean.mope
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_parser = ["avg", "denoise"])]
        noisy_expert: Option<String>,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Compare the four pipeline variants on clean/low-res/noisy data
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// Directory holding every trained weight file
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        sigma: Option<f32>,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Run the denoiser on one image
    Denoise {
        #[command(flatten)]
        common: CommonArgs,
        /// denoiser.mope file or directory containing it
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Add this much Gaussian noise before denoising
        #[arg(long)]
        sigma: Option<f32>,
    },
    /// Gate one image and run the selected expert
    Route {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory with gate.mope and denoiser.mope
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        threshold: Option<f32>,
        #[arg(long, value_parser = ["avg", "denoise"])]
        noisy_expert: Option<String>,
    },
    /// Parameter/FLOP report for the gate and denoiser
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input_size: Option<usize>,
    },
}

fn exit_code_for(err: &MopeError) -> u8 {
    match err {
        MopeError::Parse(_) | MopeError::InvalidArgument(_) => 1,
        MopeError::Io(_)
        | MopeError::BadMagic
        | MopeError::UnsupportedVersion(_)
        | MopeError::Truncated(_)
        | MopeError::UnknownTensor(_)
        | MopeError::MissingTensor(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders usage itself; config errors are exit 1
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::GenData { common, num_classes, image_size, samples_per_class } => {
            commands::gen_data(common, num_classes, image_size, samples_per_class)
        }
        Command::TrainDenoiser { common, train, data } => {
            commands::train_denoiser(common, train, data)
        }
        Command::TrainGate { common, train, data } => commands::train_gate(common, train, data),
        Command::TrainClassifier { common, train, data, mode } => {
            commands::train_classifier(common, train, data, mode)
        }
        Command::FinetuneMope { common, train, data, weights, noisy_expert, threshold } => {
            commands::finetune_mope(common, train, data, weights, noisy_expert, threshold)
        }
        Command::Eval { common, data, weights, sigma, threshold } => {
            commands::eval(common, data, weights, sigma, threshold)
        }
        Command::Denoise { common, weights, image, sigma } => {
            commands::denoise(common, weights, image, sigma)
        }
        Command::Route { common, weights, image, threshold, noisy_expert } => {
            commands::route(common, weights, image, threshold, noisy_expert)
        }
        Command::Analyze { common, input_size } => commands::analyze(common, input_size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

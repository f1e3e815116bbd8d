//! Pipeline entry point: synth → split → train → eval → embed → report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use microcirc::cli::{
    run_eval, run_kmeans, run_report, run_split, run_synth, run_train_ae, run_train_cls, run_tsne,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "microcirc",
    about = "Septic vs non-septic microcirculation-frame pipeline"
)]
struct Cli {
    /// Plain-text key=value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the top-level seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run root; every stage writes into its own subdirectory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Override any config key, e.g. --set cls.epochs=3 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-class capillary corpus.
    Synth,
    /// Assign patients to train/validation cohorts.
    Split,
    /// Train the residual classifier.
    TrainCls {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the convolutional autoencoder.
    TrainAe {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the classifier on the validation cohort.
    Eval,
    /// Embed validation-set classifier codes in 2-d.
    Tsne,
    /// Cluster validation-set bottleneck vectors.
    Kmeans,
    /// Collate metrics and render plots.
    Report,
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for (i, pair) in cli.overrides.iter().enumerate() {
        // overrides reuse the config-line parser; "line" counts overrides
        config.apply_text(pair).map_err(|e| {
            anyhow::anyhow!("--set argument {}: {e}", i + 1)
        })?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut config = resolve_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth => run_synth(&config, out),
        Command::Split => run_split(&config, out),
        Command::TrainCls { epochs } => {
            if let Some(epochs) = epochs {
                config.cls_epochs = *epochs;
            }
            run_train_cls(&config, out)
        }
        Command::TrainAe { epochs } => {
            if let Some(epochs) = epochs {
                config.ae_epochs = *epochs;
            }
            run_train_ae(&config, out)
        }
        Command::Eval => run_eval(&config, out),
        Command::Tsne => run_tsne(&config, out),
        Command::Kmeans => run_kmeans(&config, out),
        Command::Report => run_report(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

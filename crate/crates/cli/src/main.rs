//! `harlens` command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numeric failure.

mod commands;
mod datadir;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harlens::explain::AttributionMethod;
use harlens::metrics::{AtomicAccuracyMode, DEFAULT_THRESHOLD};
use harlens::training::LossMode;

#[derive(Parser)]
#[command(name = "harlens", version, about = "Explainable complex activity recognition from wearable sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth {
        /// TOML file with generator settings; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an encoder on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML file with `[train]` and `[encoder]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_loss_mode)]
        loss_mode: Option<LossMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = AccuracyArg::TruthRecall)]
        accuracy_mode: AccuracyArg,
        /// Also write per-window predictions as JSON lines.
        #[arg(long)]
        dump_predictions: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain one window. Writes the manifest to `--out`, the prompt next to
    /// it as `<stem>.prompt.txt` and the run record as `<stem>.run.json`.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Headerless CSV: timestamp then one column per checkpoint channel.
        #[arg(long)]
        window: PathBuf,
        /// File holding a prompt template.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        color: Option<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        atomic_cutoff: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::GradCamBaseline)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every loss mode over several seeds and tabulate test scores.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "kl,mse,complex-only", value_parser = parse_loss_mode)]
        modes: Vec<LossMode>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AccuracyArg {
    TruthRecall,
    DetectedPrecision,
    AllClasses,
}

impl From<AccuracyArg> for AtomicAccuracyMode {
    fn from(a: AccuracyArg) -> Self {
        match a {
            AccuracyArg::TruthRecall => AtomicAccuracyMode::TruthRecall,
            AccuracyArg::DetectedPrecision => AtomicAccuracyMode::DetectedPrecision,
            AccuracyArg::AllClasses => AtomicAccuracyMode::AllClasses,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    GradCam,
    GradCamBaseline,
    Activation,
}

impl From<MethodArg> for AttributionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::GradCam => AttributionMethod::GradCam,
            MethodArg::GradCamBaseline => AttributionMethod::GradCamBaseline,
            MethodArg::Activation => AttributionMethod::Activation,
        }
    }
}

fn parse_loss_mode(s: &str) -> Result<LossMode, String> {
    s.parse().map_err(|e: harlens::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { spec, seed, out } => commands::synth(spec, seed, run::resolve_out(out, "synth")),
        Command::Train { data, config, loss_mode, seed, epochs, out } => commands::train(
            &data,
            config,
            commands::TrainOverrides { loss_mode, seed, epochs },
            run::resolve_out(out, "train"),
        ),
        Command::Eval { checkpoint, data, split, threshold, accuracy_mode, dump_predictions, out } => commands::eval(
            &checkpoint,
            &data,
            &split,
            threshold,
            accuracy_mode.into(),
            dump_predictions,
            run::resolve_out(out, "eval"),
        ),
        Command::Explain { checkpoint, window, template, color, atomic_cutoff, method, out } => commands::explain(
            &checkpoint,
            &window,
            template,
            color,
            atomic_cutoff,
            method.into(),
            out.unwrap_or_else(|| run::resolve_out(None, "explain").join("manifest.json")),
        ),
        Command::Bench { data, config, modes, seeds, epochs, out } => {
            commands::bench(&data, config, &modes, &seeds, epochs, run::resolve_out(out, "bench"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harlens: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

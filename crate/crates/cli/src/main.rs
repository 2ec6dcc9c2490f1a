use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use nnflow_cli::commands::{self, CHECKPOINT_FILE};
use nnflow_cli::RunConfig;

/// Point-cloud scene completion with nearest-neighbor flow matching.
#[derive(Parser)]
#[command(name = "nnflow", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes and scans with a manifest.
    MakeData(MakeDataArgs),
    /// Train the vector field on a dataset.
    Train(TrainArgs),
    /// Complete scans with a trained checkpoint.
    Complete(CompleteArgs),
    /// Score completed clouds against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct MakeDataArgs {
    /// Dataset directory [default: <out_dir>/data].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory [default: <out_dir>/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint and log [default: <out_dir>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_nfm: Option<f64>,
    #[arg(long)]
    lambda_cdm: Option<f64>,
    /// Suppress per-step lines on standard output (train.log is still written).
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CompleteArgs {
    /// Checkpoint file [default: <out_dir>/checkpoint.json].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Single scan to complete (with --output FILE).
    #[arg(long, conflicts_with = "data", requires = "output")]
    scan: Option<PathBuf>,
    /// Complete every scan of this dataset (with --output DIR).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file for --scan, or directory for --data [default: <out_dir>/pred].
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    guidance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every intermediate state.
    #[arg(long)]
    trajectory: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted clouds, paired in order with --gt.
    #[arg(long, num_args = 1.., conflicts_with = "pred_dir")]
    pred: Vec<PathBuf>,
    #[arg(long, num_args = 1.., requires = "pred")]
    gt: Vec<PathBuf>,
    /// Directory of `<case-id>_pred.ply` files, paired with --data.
    #[arg(long, requires = "data")]
    pred_dir: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report file [default: <out_dir>/eval.txt].
    #[arg(long)]
    report: Option<PathBuf>,
}

fn push<T: ToString>(overrides: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={}", v.to_string()));
    }
}

/// Flags are applied after `--set`, so they win.
fn flag_overrides(command: &Command) -> Vec<String> {
    let mut o = Vec::new();
    match command {
        Command::MakeData(a) => {
            push(&mut o, "data.cases", a.cases);
            push(&mut o, "data.seed", a.seed);
        }
        Command::Train(a) => {
            push(&mut o, "train.epochs", a.epochs);
            push(&mut o, "train.batch_size", a.batch_size);
            push(&mut o, "train.max_steps", a.max_steps);
            push(&mut o, "train.seed", a.seed);
            push(&mut o, "train.objective.weights.lambda_nfm", a.lambda_nfm);
            push(&mut o, "train.objective.weights.lambda_cdm", a.lambda_cdm);
            if let Some(out) = &a.out {
                o.push(format!("out_dir={:?}", out.display().to_string()));
            }
        }
        Command::Complete(a) => {
            push(&mut o, "sampler.steps", a.steps);
            push(&mut o, "sampler.guidance_weight", a.guidance);
            push(&mut o, "complete.seed", a.seed);
            if a.trajectory {
                o.push("sampler.record_trajectory=true".into());
            }
        }
        Command::Eval(_) => {}
    }
    o
}

fn run(cli: Cli, config: RunConfig) -> Result<()> {
    let out_dir = config.out_dir.clone();
    let data_default = || out_dir.join("data");
    match cli.command {
        Command::MakeData(a) => {
            let dir = a.out.unwrap_or_else(data_default);
            let entries = commands::make_data(&config, &dir)?;
            eprintln!("wrote {} cases to {}", entries.len(), dir.display());
        }
        Command::Train(a) => {
            let data = a.data.unwrap_or_else(data_default);
            let mut sink: Box<dyn std::io::Write> = if a.quiet {
                Box::new(std::io::sink())
            } else {
                Box::new(std::io::stdout().lock())
            };
            let ck = commands::train(&config, &data, &out_dir, &mut sink)?;
            eprintln!(
                "trained {} steps; checkpoint {}",
                ck.state.step_count,
                out_dir.join(CHECKPOINT_FILE).display()
            );
        }
        Command::Complete(a) => {
            let checkpoint = a.checkpoint.unwrap_or_else(|| out_dir.join(CHECKPOINT_FILE));
            if let Some(scan) = a.scan {
                let output = a.output.expect("clap enforces --output with --scan");
                let cloud = commands::complete_file(&config, &checkpoint, &scan, &output)?;
                eprintln!("wrote {} points to {}", cloud.len(), output.display());
            } else {
                let data = a.data.unwrap_or_else(data_default);
                let output = a.output.unwrap_or_else(|| out_dir.join("pred"));
                let written = commands::complete_dataset(&config, &checkpoint, &data, &output)?;
                eprintln!("wrote {} completions to {}", written.len(), output.display());
            }
        }
        Command::Eval(a) => {
            let (preds, gts) = match (a.pred_dir, a.data) {
                (Some(pred_dir), Some(data)) => commands::dataset_pairs(&pred_dir, &data)?,
                _ => (a.pred, a.gt),
            };
            let summary = commands::eval_pairs(&config, &preds, &gts)?;
            let report = a.report.unwrap_or_else(|| out_dir.join("eval.txt"));
            write_report(&report, &summary.to_report())?;
            print!("{}", summary.table());
        }
    }
    Ok(())
}

fn write_report(path: &Path, text: &str) -> Result<()> {
    use anyhow::Context;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut overrides = cli.overrides.clone();
    overrides.extend(flag_overrides(&cli.command));
    let config = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

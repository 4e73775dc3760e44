use std::path::PathBuf;
use std::process::ExitCode;

use bodycomp::baselines::BaselineKind;
use bodycomp::commands;
use bodycomp::config::RunConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bodycomp", version, about = "Body-composition estimation from face images and anthropometrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> bodycomp::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and print its summary statistics.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: the parent of paths.dataset_csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Pearson correlation matrix of a dataset as CSV.
    Stats { csv: PathBuf },
    /// Materialise the network inputs of every record for inspection.
    Preprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the multimodal network.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a saved model on the validation split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate every record instead of the validation split.
        #[arg(long)]
        all: bool,
    },
    /// Fit structured-only baselines: svr, random_forest, gradient_boost or all.
    Baseline {
        kind: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Save models and the comparison table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict (pbf, smm) for one record.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
}

fn json<T: serde::Serialize>(v: &T) -> bodycomp::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn run(cli: Cli) -> bodycomp::Result<String> {
    match cli.command {
        Command::Synth { cfg, out } => {
            let cfg = cfg.load()?;
            let out = out.unwrap_or_else(|| commands::base_dir(&cfg.paths.dataset_csv));
            json(&commands::synth(&cfg, &out)?)
        }
        Command::Stats { csv } => Ok(commands::stats(&csv)?.to_csv()),
        Command::Preprocess { cfg, csv, out } => {
            let cfg = cfg.load()?;
            let csv = csv.unwrap_or_else(|| cfg.paths.dataset_csv.clone());
            json(&commands::preprocess(&cfg, &csv, &out)?)
        }
        Command::Train { cfg, csv, quiet } => {
            let cfg = cfg.load()?;
            let csv = csv.unwrap_or_else(|| cfg.paths.dataset_csv.clone());
            json(&commands::train(&cfg, &csv, |e| {
                if !quiet {
                    eprintln!(
                        "epoch {:>3}  train {:.4}  val {:.4}  val MAE pbf {:.3} smm {:.3}",
                        e.epoch, e.train_loss, e.val_loss, e.val_mae_pbf, e.val_mae_smm
                    );
                }
            })?)
        }
        Command::Evaluate {
            cfg,
            model,
            csv,
            out,
            all,
        } => {
            let cfg = cfg.load()?;
            let model = model.unwrap_or_else(|| cfg.paths.model.clone());
            let csv = csv.unwrap_or_else(|| cfg.paths.dataset_csv.clone());
            let out = out.unwrap_or_else(|| cfg.paths.output_dir.join("eval"));
            let split = (!all).then_some(&cfg.split);
            json(&commands::evaluate(&model, &csv, &out, split)?)
        }
        Command::Baseline { kind, cfg, csv, out } => {
            let kinds = if kind == "all" {
                BaselineKind::ALL.to_vec()
            } else {
                vec![kind.parse::<BaselineKind>()?]
            };
            let cfg = cfg.load()?;
            let csv = csv.unwrap_or_else(|| cfg.paths.dataset_csv.clone());
            json(&commands::baseline(&kinds, &cfg, &csv, out.as_deref())?)
        }
        Command::Predict { model, csv, id } => json(&commands::predict(&model, &csv, id.as_deref())?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{}", out.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}


//! `cmi` — train and evaluate contrastive representations for binary
//! time-series movement prediction.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
//! diverged.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use cmi_core::config::RunConfig;
use cmi_core::encoder::ContextMode;
use cmi_core::error::Error;
use cmi_core::runner;
use cmi_core::train::TrainMode;

#[derive(Parser)]
#[command(name = "cmi", version, about = "Contrastive representation learning for movement prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training mode (cmi|direct).
    #[arg(long)]
    mode: Option<String>,
    /// Override the context head (attention|max|avg|concat_dense|last).
    #[arg(long)]
    context_mode: Option<String>,
    /// Override stock-identity conditioning (true|false).
    #[arg(long)]
    identity: Option<bool>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(mode) = &self.mode {
            cfg.train.mode = TrainMode::from_str(mode)?;
        }
        if let Some(cm) = &self.context_mode {
            cfg.model.context_mode = ContextMode::from_str(cm)?;
        }
        if let Some(id) = self.identity {
            cfg.model.use_identity = id;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic OHLCV CSVs with drift regimes.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory for `<TICKER>.csv` files.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Ingest CSVs and write the featurized dataset container.
    Featurize {
        #[command(flatten)]
        common: Common,
        /// Output dataset path (defaults to the configured data.dataset).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an encoder and write a checkpoint plus training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint output path.
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: frozen contexts + logistic head + metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report path prefix (writes `<out>.txt` and `<out>.json`).
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Train and evaluate every configured variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Table path prefix (writes `<out>.txt` and `<out>.json`).
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
}

fn run() -> Result<(), Error> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap's rendered help/usage text, but with our exit-code contract
        eprint!("{e}");
        Error::Config("invalid usage".into())
    })?;
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = common.load()?;
            let paths = runner::run_synth(&cfg, &out)?;
            println!("wrote {} synthetic tickers to {}", paths.len(), out.display());
        }
        Command::Featurize { common, out } => {
            let cfg = common.load()?;
            let out = out.unwrap_or_else(|| cfg.data.dataset.clone());
            let report = runner::run_featurize(&cfg, &out)?;
            println!("{report}");
            println!("dataset written to {}", out.display());
        }
        Command::Train { common, out } => {
            let cfg = common.load()?;
            let summary = runner::run_train(&cfg, &out)?;
            println!(
                "trained {} epochs ({} steps) on {} samples; loss {:.6} -> {:.6}",
                summary.epochs_run,
                summary.steps,
                summary.train_samples,
                summary.first_epoch_loss,
                summary.final_epoch_loss
            );
            println!("checkpoint: {}", summary.checkpoint_path.display());
            println!("log:        {}", summary.log_path.display());
        }
        Command::Evaluate { common, checkpoint, out } => {
            let cfg = common.load()?;
            let bundle = runner::run_evaluate(&cfg, &checkpoint, &out)?;
            match &bundle.test_report {
                Some(t) => println!(
                    "test accuracy {:.2}%  mcc {:.4}  gap {:.2}pp  (train {:.2}%)",
                    t.accuracy,
                    t.mcc,
                    t.generalization_gap.unwrap_or(f64::NAN),
                    bundle.train_report.accuracy
                ),
                None => println!(
                    "test metrics undefined (empty test split); train accuracy {:.2}%",
                    bundle.train_report.accuracy
                ),
            }
            println!("reports: {}.txt / {}.json", out.display(), out.display());
        }
        Command::Ablate { common, out } => {
            let cfg = common.load()?;
            let rows = runner::run_ablation(&cfg, &out)?;
            print!("{}", cmi_core::report::render_ablation_text(&rows));
            println!("tables: {}.txt / {}.json", out.display(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use preig::commands::{self, WindowChoice};
use preig::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "preig", version, about = "Price-elasticity-constrained GRU demand forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smooth the feature columns and report the chosen orders.
    Denoise {
        #[command(flatten)]
        common: Common,
    },
    /// Population-based training; writes checkpoint, history and logs.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Predict a window and write the report table, JSON and chart.
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Defaults to model.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        window: WindowChoice,
        /// Skip the SVG chart.
        #[arg(long)]
        no_plot: bool,
    },
    /// Accuracy metrics and price-sign diagnostics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        window: WindowChoice,
    },
}

fn load(common: &Common) -> preig::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> preig::Result<()> {
    match cli.command {
        Command::Denoise { common } => {
            let cfg = load(&common)?;
            let path = commands::denoise(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Train { common } => {
            let cfg = load(&common)?;
            let s = commands::train_cmd(&cfg)?;
            println!(
                "best validation loss {:.6e} (eta {:.4e}, lambda2 {:.4}); checkpoint {}",
                s.val_loss,
                s.eta,
                s.lambda2,
                s.checkpoint.display()
            );
        }
        Command::Forecast { common, checkpoint, window, no_plot } => {
            let cfg = load(&common)?;
            let ck = checkpoint.unwrap_or_else(|| commands::default_checkpoint(&cfg));
            let rep = commands::forecast(&cfg, &ck, window, !no_plot)?;
            print!("{}", preig::report::report_csv(&rep));
            println!("RMSE {:.4}  MAPE {:.2}%", rep.rmse, rep.mape);
        }
        Command::Evaluate { common, checkpoint, window } => {
            let cfg = load(&common)?;
            let ck = checkpoint.unwrap_or_else(|| commands::default_checkpoint(&cfg));
            let e = commands::evaluate(&cfg, &ck, window)?;
            println!(
                "RMSE {:.4}  MAPE {:.2}%  violation fraction {:.4}",
                e.rmse, e.mape, e.violation_fraction
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

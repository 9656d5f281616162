use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use offeropt::pipeline::{init_workspace, run_all, run_stage, PipelineConfig, PipelineError, Stage};
use offeropt::synth::{default_responses, gen_synthetic, OfferModel, Response, SyntheticConfig};

#[derive(Parser)]
#[command(name = "offeropt", version, about = "Consumer-item offer optimization pipeline")]
struct Cli {
    /// More log output; repeat for debug logs.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a workspace with a fully spelled-out default configuration.
    Init {
        workspace: PathBuf,
        /// Transaction log to point the configuration at.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of training epochs to write into the configuration.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overwrite an existing configuration.
        #[arg(long)]
        force: bool,
    },
    /// Write a synthetic transaction log with known offer responses.
    Synth {
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth responses as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        consumers: usize,
        #[arg(long, default_value_t = 12)]
        items: usize,
        #[arg(long, default_value_t = 3)]
        categories: usize,
        #[arg(long, default_value_t = 26)]
        periods: usize,
        /// Standard deviation of the per-period offer jitter around each
        /// pair's anchor offer.
        #[arg(long, default_value_t = 4.0)]
        jitter: f64,
        /// Category response as `a,b`, once per category; overrides
        /// `--categories`.
        #[arg(long = "response", value_parser = parse_response)]
        responses: Vec<Response>,
    },
    Ingest { workspace: PathBuf },
    Featurize { workspace: PathBuf },
    Train { workspace: PathBuf },
    Predict { workspace: PathBuf },
    Thresholds { workspace: PathBuf },
    Elasticity { workspace: PathBuf },
    Optimize { workspace: PathBuf },
    Report { workspace: PathBuf },
    /// Every stage in order.
    Run { workspace: PathBuf },
}

fn parse_response(s: &str) -> Result<Response, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let a = a.trim().parse::<f64>().map_err(|e| format!("a: {e}"))?;
    let b = b.trim().parse::<f64>().map_err(|e| format!("b: {e}"))?;
    Ok(Response { a, b })
}

fn execute(command: Command) -> Result<(), PipelineError> {
    let stage = |s: Stage, ws: PathBuf| run_stage(&ws, s);
    match command {
        Command::Init { workspace, input, epochs, force } => {
            let mut cfg = PipelineConfig::default();
            if let Some(input) = input {
                cfg.paths.input = input;
            }
            if let Some(epochs) = epochs {
                cfg.train.epochs = epochs;
            }
            let path = init_workspace(&workspace, &cfg, force)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Synth { out, truth, seed, consumers, items, categories, periods, jitter, responses } => {
            let responses = if responses.is_empty() { default_responses(categories) } else { responses };
            let mut cfg = SyntheticConfig::new(seed, consumers, items, responses, periods);
            cfg.offers = OfferModel::PairAnchored { jitter };
            let data = gen_synthetic(&cfg).map_err(|e| PipelineError::Usage(e.to_string()))?;
            offeropt::ingest::write_transactions(&out, &data.records)
                .map_err(|e| PipelineError::Internal(e.to_string()))?;
            if let Some(truth) = truth {
                let text = serde_json::to_string_pretty(&data.truth).map_err(|e| PipelineError::Internal(e.to_string()))?;
                std::fs::write(&truth, text + "\n").map_err(|e| PipelineError::Io { path: truth.clone(), source: e })?;
            }
            println!("{} transactions", data.records.len());
            Ok(())
        }
        Command::Ingest { workspace } => stage(Stage::Ingest, workspace),
        Command::Featurize { workspace } => stage(Stage::Featurize, workspace),
        Command::Train { workspace } => stage(Stage::Train, workspace),
        Command::Predict { workspace } => stage(Stage::Predict, workspace),
        Command::Thresholds { workspace } => stage(Stage::Thresholds, workspace),
        Command::Elasticity { workspace } => stage(Stage::Elasticity, workspace),
        Command::Optimize { workspace } => stage(Stage::Optimize, workspace),
        Command::Report { workspace } => stage(Stage::Report, workspace),
        Command::Run { workspace } => run_all(&workspace),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

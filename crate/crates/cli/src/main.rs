use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subcr_core::error::Error;
use subcr_core::pipeline::Variant;

mod commands;
mod config;

use config::Overrides;

/// Anomaly detection on attributed graphs by subgraph contrast and masked
/// attribute reconstruction.
#[derive(Debug, Parser)]
#[command(name = "subcr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; without it the bundled defaults for --dataset are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset name: cora, citeseer, pubmed, blogcatalog, flickr, a directory
    /// name under $SUBCR_DATA_DIR, or synthetic-{small,cora,citeseer,pubmed}.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Dataset directory, overriding $SUBCR_DATA_DIR/<dataset>.
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// full, sub-r, sub-c, sub-weight or sub-global.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Inference sampling rounds; fewer than 300 flags the report as low-round.
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Diffusion cache directory; beats $SUBCR_CACHE_DIR.
    #[arg(long, global = true)]
    diffusion_cache: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inject clique and attribute anomalies and write the labeled dataset.
    Inject,
    /// Compute the PPR diffusion matrix into the cache.
    Diffuse,
    /// Train and write model.ckpt and epoch_log.csv.
    Train,
    /// Score every node with a trained checkpoint.
    Score {
        /// Defaults to <out>/model.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// ROC and AUC for a score report.
    Eval {
        /// Directory holding scores.csv and report.json; defaults to <out>.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Diffuse, train, score and evaluate.
    Run,
    /// Run the pipeline over the configured parameter grids.
    Sweep {
        /// Grid points evaluated concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();

    let c = cli.common;
    let overrides = Overrides {
        dataset: c.dataset,
        dataset_dir: c.dataset_dir,
        seed: c.seed,
        variant: c.variant,
        rounds: c.rounds,
        epochs: c.epochs,
        out: c.out,
        diffusion_cache: c.diffusion_cache,
    };
    let result = commands::Context::new(c.config.as_deref(), overrides).and_then(|ctx| match cli.command {
        Command::Inject => ctx.inject(),
        Command::Diffuse => ctx.diffuse(),
        Command::Train => ctx.train(),
        Command::Score { checkpoint } => ctx.score(checkpoint),
        Command::Eval { scores } => ctx.eval(scores),
        Command::Run => ctx.run(),
        Command::Sweep { jobs } => ctx.sweep(jobs),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The cause chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

/// 2 for usage and IO problems, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e
        .chain()
        .find_map(|cause| cause.downcast_ref::<Error>())
        .is_some_and(Error::is_usage);
    if usage {
        2
    } else {
        1
    }
}

//! `nftproj`: ingestion, synthesis, context fitting, training, generation and
//! evaluation of context-conditioned NFT transaction series projections.

mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Invalid arguments or configuration (exit status 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Project NFT collection transaction series from their first quarter.
///
/// Exit status: 0 success, 1 usage or configuration error, 2 data error
/// (missing or malformed input), 3 numeric failure (non-finite training or
/// degenerate statistics).
#[derive(Debug, Parser)]
#[command(name = "nftproj", version)]
pub struct Cli {
    /// Worker threads; 1 makes every run bit-reproducible. Defaults to the
    /// config's `threads`, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch sale events from an explorer API or normalize an event file.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Write the seeded synthetic benchmark suite (manifest and event CSVs).
    Synth(SynthArgs),
    /// Build a per-token daily series CSV from sale events.
    Series(SeriesArgs),
    /// Fit, apply or inspect collection context embeddings.
    #[command(subcommand)]
    Context(ContextCmd),
    /// Train the baselines, the aggregate model and the contextual model.
    Train(TrainArgs),
    /// Project a collection's Q2-Q4 series from its first quarter.
    Generate(GenerateArgs),
    /// Score trained models on the test collections.
    Evaluate(EvaluateArgs),
    /// Per-day mean/variance and sample-token CSVs for series files.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum IngestCmd {
    /// Page through an Etherscan-style API. The key is read from NFTPROJ_API_KEY.
    ///
    /// Output CSV columns: collection_id,token_id,timestamp,price_eth.
    Fetch(FetchArgs),
    /// Read a CSV or JSONL event file, check it and write it as sorted CSV.
    ///
    /// CSV input needs the columns collection_id,token_id,timestamp,price_eth
    /// (optional event_type). JSONL records carry the same keys.
    Load(LoadArgs),
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// API endpoint, e.g. https://api.example.org/api.
    #[arg(long)]
    pub base_url: String,
    /// Collection contract address; becomes the collection id (lowercased).
    #[arg(long)]
    pub address: String,
    #[arg(long)]
    pub from_block: u64,
    #[arg(long)]
    pub to_block: u64,
    /// Records per page.
    #[arg(long, default_value_t = 1000)]
    pub page_size: u32,
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    /// Output event CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// csv or jsonl; defaults to the file extension.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    /// Directory receiving manifest.toml and one `<id>.csv` event file per collection.
    #[arg(long)]
    pub out: PathBuf,
    /// Generate from this manifest instead of the standard suite.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Event file (csv or jsonl).
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub collection: String,
    /// Unix timestamp of the collection's first day.
    #[arg(long)]
    pub inception: u64,
    /// Tokens are `token_start .. token_start + token_count`.
    #[arg(long)]
    pub token_count: u64,
    #[arg(long, default_value_t = 0)]
    pub token_start: u64,
    /// Write only this quarter (1-4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub quarter: Option<u8>,
    /// Output CSV: token_id,day,value_eth,count.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ContextCmd {
    /// Fit PCA and normalization on the config's training collections and
    /// write a context-only checkpoint plus the context table CSV.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Context table CSV (collection_id,c1..c6); defaults to `<out>.contexts.csv`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Print the context vector of a series CSV.
    Embed(EmbedArgs),
    /// Print the distance to the nearest training context and warn when it
    /// exceeds the threshold.
    Distance {
        #[command(flatten)]
        embed: EmbedArgs,
        /// Defaults to the largest nearest-neighbour distance among training contexts.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Series CSV covering at least the first quarter.
    #[arg(long)]
    pub series: PathBuf,
    /// Collection id; defaults to the series file stem.
    #[arg(long)]
    pub collection: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving contextpred.ckpt, aggregate.ckpt,
    /// baseline-<id>.ckpt, matching `<name>.loss.csv` (epoch,loss) files and
    /// contexts.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Override `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint holding a context model and a trained model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Series CSV covering at least the first quarter.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub collection: Option<String>,
    /// Context-distance warning threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Directory receiving raw.csv (smooth generation) and projection.csv
    /// (step-transformed), both covering days 0-364.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub models: PathBuf,
    /// Directory receiving evaluation.csv and diagnostics.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `label=path` of a series CSV; repeatable.
    #[arg(long = "series", required = true)]
    pub series: Vec<String>,
    /// Output CSV: series,day,value_mean,value_var,count_mean,count_var.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the days of the N most traded tokens of each series.
    #[arg(long, default_value_t = 0)]
    pub sample_tokens: usize,
    /// Sample-token CSV: series,token_id,day,value_eth,count.
    #[arg(long, requires = "sample_tokens")]
    pub samples_out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some((_, kind)) = nftproj::classify(cause) {
            return match kind {
                nftproj::ErrorKind::Usage => EXIT_USAGE,
                nftproj::ErrorKind::Data => EXIT_DATA,
                nftproj::ErrorKind::Numeric => EXIT_NUMERIC,
            };
        }
    }
    EXIT_DATA
}

/// `Type::Variant` of the first library error in the chain.
fn variant_name(err: &anyhow::Error) -> Option<String> {
    err.chain().find_map(|cause| {
        let (ty, _) = nftproj::classify(cause)?;
        let dbg = format!("{cause:?}");
        let variant: String = dbg.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        Some(format!("{ty}::{variant}"))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match variant_name(&err) {
                Some(v) => eprintln!("error ({v}): {err:#}"),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

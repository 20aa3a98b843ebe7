use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sketch_sfa::verify::Suite;

use crate::config::SpectraSource;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sketch-sfa", version, about = "Slow feature analysis with sampling-based linear algebra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset (data.csv, meta.json).
    GenData(GenArgs),
    /// Run a solver, the verification suites or a benchmark sweep.
    Run {
        #[command(subcommand)]
        what: RunCommand,
    },
    /// Re-run the command recorded in a manifest and compare primary artifacts.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Dense solver (result.json, features.csv).
    Exact(ExactArgs),
    /// Sampling pipeline (model.json, optional queries.csv and samples.csv).
    Qi(QiArgs),
    /// Named verification suites (reports.jsonl, summary.csv).
    Verify(VerifyArgs),
    /// Entry reads and error over a grid of sample counts (bench.csv).
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Blobs,
    WiskottSignal,
    LowRank,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Rows (blobs, low-rank).
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Columns (blobs, low-rank).
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    /// Number of classes (blobs).
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Multiplier on the class offsets (blobs).
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Rank of the noiseless part (low-rank).
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Standard deviation of the additive noise (low-rank).
    #[arg(long, default_value_t = 1e-3)]
    pub noise: f64,
    /// Largest singular value of the noiseless part (low-rank).
    #[arg(long, default_value_t = 10.0)]
    pub scale: f64,
    /// Time steps (wiskott-signal).
    #[arg(long = "T", value_name = "T", default_value_t = 4000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Treat the `label` column as class labels (pairs within classes);
    /// otherwise rows are a time series.
    #[arg(long)]
    pub labels: bool,
    /// Number of slow features.
    #[arg(long = "J", value_name = "J")]
    pub j: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip per-column standardization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Quadratic expansion, standardized again afterwards.
    #[arg(long)]
    pub expand: bool,
    /// Cap on sampled within-class pairs per class.
    #[arg(long, value_name = "M")]
    pub max_pairs: Option<usize>,
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct QiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target relative error used to select the step parameters.
    #[arg(long)]
    pub eps_target: Option<f64>,
    /// Where the spectral quantities used for sizing come from.
    #[arg(long, value_enum)]
    pub spectra: Option<SpectraSource>,
    /// Query output entry (I, J); repeatable.
    #[arg(long, num_args = 2, value_names = ["I", "J"], action = clap::ArgAction::Append)]
    pub query: Vec<usize>,
    /// Additive error of estimated entry queries.
    #[arg(long, default_value_t = 0.05)]
    pub query_eps: f64,
    /// Failure probability of estimated entry queries.
    #[arg(long, default_value_t = 0.1)]
    pub query_delta: f64,
    /// Sample output columns of this row.
    #[arg(long, value_name = "ROW")]
    pub sample_row: Option<usize>,
    /// Number of draws for --sample-row.
    #[arg(long, value_name = "M", default_value_t = 100_000)]
    pub draws: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `all`, or a comma-separated list of suite names.
    #[arg(long, default_value = "all", value_parser = parse_suites)]
    pub suite: SuiteSelection,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sample counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4096,16384,65536")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long = "J", value_name = "J")]
    pub j: Option<usize>,
    #[arg(long)]
    pub eps_target: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "M")]
    pub max_pairs: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the re-run; defaults to `replay/` beside the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteSelection(pub Vec<Suite>);

fn parse_suites(s: &str) -> Result<SuiteSelection, String> {
    if s == "all" {
        return Ok(SuiteSelection(Suite::ALL.to_vec()));
    }
    let suites = s
        .split(',')
        .map(|name| {
            Suite::parse(name.trim()).ok_or_else(|| {
                let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                format!("unknown suite {name:?} (expected all or one of {})", known.join(", "))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SuiteSelection(suites))
}

pub fn parse(args: &[String]) -> Result<Cli, CliError> {
    let argv = std::iter::once("sketch-sfa".to_string()).chain(args.iter().cloned());
    Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Help(e.render().to_string()),
        _ => CliError::Usage(e.render().to_string().trim_end().trim_start_matches("error: ").to_string()),
    })
}

/// Parses and runs one command line (without the program name).
pub fn execute(args: &[String]) -> Result<(), CliError> {
    let cli = parse(args)?;
    let command = crate::manifest::canonical_args(args)?;
    match cli.command {
        Command::GenData(a) => crate::data::gen_data(&a, command),
        Command::Run { what } => match what {
            RunCommand::Exact(a) => crate::run::exact(&a, command),
            RunCommand::Qi(a) => crate::run::qi(&a, command),
            RunCommand::Verify(a) => crate::verify::verify(&a, command),
            RunCommand::Bench(a) => crate::bench::bench(&a, command),
        },
        Command::Replay(a) => crate::replay::replay(&a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn repeated_queries_collect_pairs() {
        let cli = parse(&args("run qi --in a.csv --out o --query 1 2 --query 3 0")).unwrap();
        let Command::Run { what: RunCommand::Qi(q) } = cli.command else { panic!() };
        assert_eq!(q.query, vec![1, 2, 3, 0]);
    }

    #[test]
    fn suites_parse() {
        assert_eq!(parse_suites("all").unwrap().0.len(), Suite::ALL.len());
        assert_eq!(parse_suites("svd,davis-kahan").unwrap().0, vec![Suite::Svd, Suite::DavisKahan]);
        assert!(parse_suites("nope").is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let err = parse(&args("run exact --in a.csv --out o --bogus")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(parse(&args("--help")).unwrap_err().exit_code(), 0);
    }
}

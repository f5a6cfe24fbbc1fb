//! Command-line pipeline for VoCoT data: GQA verbalization, GPT-4V payloads
//! and response screening, sequence assembly, corpus filters, evaluation and
//! corpus statistics. Every command streams JSON Lines and writes a run
//! manifest next to its main output.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use vocot_core::{PatchGrid, Precision};

pub mod commands;
pub mod config;
pub mod manifest;
pub mod records;
pub mod stream;

use config::{Config, Overrides};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "vocot", version, about = "Build and evaluate visually grounded chain-of-thought data")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "VOCOT_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Patch grid as ROWSxCOLS, e.g. 24x24.
    #[arg(long, global = true)]
    pub grid: Option<PatchGrid>,
    /// Decimal places for emitted coordinates (2 or 3).
    #[arg(long, global = true)]
    pub precision: Option<u8>,
    /// IoU threshold for referring-expression scoring.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Where to write the run manifest (default: <output>.manifest.json).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn GQA programs into type 1 grounded-thought records.
    VerbalizeGqa {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build GPT-4V payloads or screen their responses.
    Synthesize {
        #[command(subcommand)]
        phase: SynthPhase,
    },
    /// Convert records into interleaved training sequences.
    Assemble {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also emit the image + question + CoT trigger prompt.
        #[arg(long)]
        prompt: bool,
    },
    /// Apply a pre-training corpus filter to metadata lines.
    Filter {
        #[arg(long, value_enum)]
        kind: FilterKind,
        #[arg(long)]
        input: PathBuf,
        /// Kept ids, one per line.
        #[arg(long)]
        out: PathBuf,
        /// Drop-reason histogram (default: <out>.hist.json).
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Score predictions against gold labels.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Metric report (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Per-step accuracy table (CSV).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Object synonyms for the hallucination metric: {"name": ["synonym", ...]}.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Count records by source type, reasoning steps and boxes.
    Stats {
        #[arg(long)]
        records: PathBuf,
        /// JSON output (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthPhase {
    /// Write one chat payload per request.
    Payloads {
        #[arg(long)]
        requests: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        mode: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse, validate and filter raw responses into records.
    Ingest {
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        mode: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    /// Interleaved documents: image-sentence similarity and image count.
    Mmc4,
    /// Grounded captions: CLIP score.
    Grit,
    /// Region crops: minimum side length.
    VgRegion,
}

/// Failure classes, mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Config(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "{e:#}"),
            CliError::Config(e) => write!(f, "configuration: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

fn resolve_config(cli: &Cli) -> anyhow::Result<Config> {
    let precision = cli.precision.map(Precision::new).transpose()?;
    let overrides = Overrides { seed: cli.seed, grid: cli.grid, precision, threshold: cli.threshold };
    Config::load(cli.config.as_deref(), &overrides)
}

fn manifest_path(cli: &Cli, out: &Path) -> PathBuf {
    cli.manifest.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    })
}

/// Runs one parsed invocation and writes its manifest.
pub fn run(cli: Cli) -> Result<RunManifest, CliError> {
    let cfg = resolve_config(&cli).map_err(CliError::Config)?;
    if let Some(n) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (manifest, out) = match &cli.command {
        Command::VerbalizeGqa { questions, scenes, out } => (commands::verbalize::run(&cfg, questions, scenes, out), out.clone()),
        Command::Synthesize { phase: SynthPhase::Payloads { requests, mode, out } } => {
            (commands::synthesize::payloads(&cfg, requests, *mode, out), out.clone())
        }
        Command::Synthesize { phase: SynthPhase::Ingest { requests, responses, mode, out } } => {
            (commands::synthesize::ingest(&cfg, requests, responses, *mode, out), out.clone())
        }
        Command::Assemble { records, out, prompt } => (commands::assemble::run(&cfg, records, out, *prompt), out.clone()),
        Command::Filter { kind, input, out, histogram } => {
            (commands::filter::run(&cfg, *kind, input, out, histogram.as_deref()), out.clone())
        }
        Command::Eval { predictions, gold, out, csv, lexicon } => {
            (commands::eval::run(&cfg, predictions, gold, out, csv.as_deref(), lexicon.as_deref()), out.clone())
        }
        Command::Stats { records, out } => {
            let target = out.clone().unwrap_or_else(|| PathBuf::from("stats.json"));
            (commands::stats::run(&cfg, records, out.as_deref()), target)
        }
    };
    let manifest = manifest.map_err(CliError::Input)?;
    manifest.write(&manifest_path(&cli, &out)).map_err(CliError::Input)?;
    Ok(manifest)
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(m) => {
            eprintln!(
                "{}: {} in, {} out, {} dropped",
                m.command, m.counts.input, m.counts.output, m.counts.dropped
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

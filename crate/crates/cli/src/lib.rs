//! `infill-bench`: FIM data preparation, infilling generators, DSSP,
//! interaction sites, the SEIFER pipeline and fitness scoring.

pub mod commands;
pub mod error;
pub mod meta;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "infill-bench", version, about = "Fill-in-middle protein design and secondary-structure recovery benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply the FIM transformation to every FASTA record.
    FimTransform(FimTransformArgs),
    /// Extract secondary-structure middle sites as fill queries.
    Sites(SitesArgs),
    /// Fill every query in a sites file with a generator.
    Generate(GenerateArgs),
    /// Assign secondary structure to a PDB/mmCIF/JSON structure.
    Dssp(DsspArgs),
    /// Interface residues and their relative-position histogram.
    Interactions(InteractionsArgs),
    /// Full structure-recovery pipeline with report and tables.
    Seifer(SeiferArgs),
    /// pLDDT delta CDF from outcomes and baselines.
    PlddtDelta(PlddtDeltaArgs),
    /// Zero-shot or embedding-head fitness prediction.
    Fitness(FitnessArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Random,
    Markov,
    Fim,
    Ar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Loglik,
    Embedding,
}

#[derive(Debug, Args, Serialize)]
pub struct FimTransformArgs {
    pub fasta: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub p_fim: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Reference proteins: structures, or FASTA with matching SS3 records.
#[derive(Debug, Args, Serialize)]
pub struct ProteinInputs {
    #[arg(long, num_args = 1..)]
    pub structures: Vec<PathBuf>,
    #[arg(long, requires = "ss3")]
    pub fasta: Option<PathBuf>,
    /// FASTA-formatted H/E/C strings keyed by the same ids.
    #[arg(long, requires = "fasta")]
    pub ss3: Option<PathBuf>,
    #[arg(long, default_value = "H=10,E=6,C=6")]
    pub min_lens: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SitesArgs {
    #[command(flatten)]
    pub inputs: ProteinInputs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GeneratorArgs {
    #[arg(long, value_enum, default_value_t = GeneratorKind::Random)]
    pub generator: GeneratorKind,
    /// Weight bundle for the fim and ar generators.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Training corpus for the markov generator.
    #[arg(long)]
    pub train_fasta: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub markov_order: usize,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.95)]
    pub top_p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Resample duplicate candidates.
    #[arg(long)]
    pub dedup: bool,
    /// Accept flanks shorter than four residues.
    #[arg(long)]
    pub relax: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// JSONL of `{site_id, prefix, suffix, target_len}`.
    pub sites: PathBuf,
    #[command(flatten)]
    pub gen: GeneratorArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DsspArgs {
    pub structure: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output directory; prints to stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct InteractionsArgs {
    pub structure: PathBuf,
    #[arg(long, default_value_t = infill_core::structio::DEFAULT_CUTOFF)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SeiferArgs {
    #[command(flatten)]
    pub inputs: ProteinInputs,
    /// Oracle config, JSON or TOML.
    #[arg(long)]
    pub oracle: PathBuf,
    #[command(flatten)]
    pub gen: GeneratorArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
    #[arg(long, default_value_t = 5)]
    pub position_bins: usize,
    /// Count candidates identical to the original middle as hits.
    #[arg(long)]
    pub allow_identical: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlddtDeltaArgs {
    /// `outcomes.jsonl` from a seifer run.
    pub outcomes: PathBuf,
    /// JSON map `{protein_id: plddt}` (optionally under `baselines`) or CSV `protein_id,plddt`.
    #[arg(long)]
    pub baselines: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitnessArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Loglik)]
    pub scorer: ScorerKind,
    #[arg(long, default_value_t = infill_core::fitness::DEFAULT_RIDGE_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value = "sequence")]
    pub seq_col: String,
    #[arg(long, default_value = "target")]
    pub target_col: String,
    #[arg(long, default_value = "set")]
    pub split_col: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FimTransform(a) => commands::fim_transform(&a),
        Command::Sites(a) => commands::sites(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Dssp(a) => commands::dssp(&a),
        Command::Interactions(a) => commands::interactions(&a),
        Command::Seifer(a) => commands::seifer(&a),
        Command::PlddtDelta(a) => commands::plddt_delta(&a),
        Command::Fitness(a) => commands::fitness(&a),
    }
}

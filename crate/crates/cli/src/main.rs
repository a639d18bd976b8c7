//! `g2t`: preprocess graph datasets, train graph-to-text models, generate,
//! evaluate, run layer/skip ablations and check gradients.

mod artifacts;
mod commands;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use g2t::decoder::AttentionKind;
use g2t::encoders::{LabelMode, SkipKind};
use g2t::ingestion::{SplitName, Task};
use g2t::model::EncoderKind;
use serde::de::DeserializeOwned;

/// Error for misuse rather than bad data: exit status 2.
#[derive(Debug)]
pub struct ContractViolation(pub String);

impl fmt::Display for ContractViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ContractViolation {}

/// Parses a lowercase or kebab-case enum name through its serde form.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "g2t", version, about = "Graph-to-text generation with graph convolutional encoders")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory that relative input paths are resolved against.
    #[arg(long, global = true, env = "G2T_DATA_ROOT")]
    pub data_root: Option<PathBuf>,

    /// Seed for every random stream (initialisation, shuffling, dropout,
    /// linearisation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert triple or dependency files into JSONL datasets.
    Preprocess(PreprocessArgs),
    /// Train a model, or several with --runs.
    Train(TrainArgs),
    /// Decode a JSONL dataset with a checkpoint.
    Generate(GenerateArgs),
    /// Score outputs with corpus BLEU.
    Evaluate(EvaluateArgs),
    /// Train a grid of layer counts and skip connections.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients of built models.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_parser = parse_enum::<Task>)]
    pub task: Option<Task>,
    /// A directory holding train.txt, dev.txt and/or test.txt, or one file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Split name for a single input file.
    #[arg(long, value_parser = parse_enum::<SplitName>, default_value = "train")]
    pub split: SplitName,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub linearise: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub edge_labels: Option<bool>,
    #[arg(long)]
    pub max_target_len: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lowercase: Option<bool>,
}

/// Model and optimisation flags shared by `train` and `ablate`.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_enum::<EncoderKind>)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, value_parser = parse_enum::<SkipKind>)]
    pub skip: Option<SkipKind>,
    /// Hidden width; also sets the embedding width unless --embed-dim is given.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub copy: Option<bool>,
    #[arg(long, value_parser = parse_enum::<AttentionKind>)]
    pub attention: Option<AttentionKind>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub input_feeding: Option<bool>,
    #[arg(long, value_parser = parse_enum::<LabelMode>)]
    pub label_mode: Option<LabelMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_decode_len: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub sort_window: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dev_smoothing: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_every_epoch: Option<bool>,
    /// New sibling order for linearised training sources at every epoch.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub relinearise_each_epoch: Option<bool>,
    /// Embedding file for initialising both embedding tables.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with train.jsonl, dev.jsonl and optionally test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Vocabulary file to check against the checkpoint; defaults to
    /// vocab.json beside the checkpoint when present.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Keep placeholders instead of restoring surface strings.
    #[arg(long)]
    pub no_relex: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output file, one line per example.
    #[arg(long, requires = "reference")]
    pub hyp: Option<PathBuf>,
    /// Reference file: plain text aligned with --hyp, or JSONL whose targets
    /// are used. Repeat for several references per example.
    #[arg(long = "ref")]
    pub reference: Vec<PathBuf>,
    /// Decode with this checkpoint instead of reading --hyp.
    #[arg(long, conflicts_with = "hyp", requires = "input")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    /// Smooth zero n-gram matches.
    #[arg(long)]
    pub smooth: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_layers: Option<usize>,
    #[arg(long)]
    pub max_layers: Option<usize>,
    /// Comma-separated skip kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<SkipKind>)]
    pub skips: Option<Vec<SkipKind>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// residual-gcn, dense-gcn-copy, bilstm or all.
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    /// JSONL file whose first example replaces the built-in toy graph.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Fault injection: perturb the analytic gradient of this parameter.
    #[arg(long)]
    pub corrupt_grad: Option<String>,
}

/// 2 for contract violations (bad flags, configuration, locks, failed
/// gradient checks), 1 for everything else.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ContractViolation>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<g2t::Error>() {
            return if e.is_contract_violation() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}

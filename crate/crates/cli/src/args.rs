use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eorewrite_core::TokenizeMode;

#[derive(Debug, Parser)]
#[command(name = "eorewrite", version, about = "Edit-operation guided incomplete utterance rewriting")]
pub struct Cli {
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Tokenizer for corpus text.
    #[arg(long, global = true, default_value = "word", value_parser = parse_mode)]
    pub tokenize: TokenizeMode,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<TokenizeMode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a foreign dataset layout into the JSON-lines corpus format.
    Convert(ConvertArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Attach gold edit labels to every record.
    DeriveLabels(InOut),
    /// Check labels against the alignment and validate dialogue graphs.
    Check(CheckArgs),
    /// Add coreference/ellipsis swapped copies of samples.
    AugmentEdit(AugmentEditArgs),
    /// Paraphrase dialogue histories through a chat-completion endpoint.
    AugmentLlm(AugmentLlmArgs),
    /// Build dialogue graphs and report edge counts.
    BuildGraph(BuildGraphArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Rewrite the incomplete utterances of a corpus with a checkpoint.
    Rewrite(RewriteArgs),
    /// Score rewrites against a corpus.
    Evaluate(EvaluateArgs),
    /// Compare analytic and numeric gradients of every model block.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct InOut {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceFormat {
    /// Tab-separated turns per line; the last two columns are the incomplete
    /// utterance and its rewrite.
    Tsv,
    /// JSON array of `{"History": [...], "Question": ..., "Rewrite": ...}`.
    Canard,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: SourceFormat,
    pub input: PathBuf,
    pub output: PathBuf,
    /// CoNLL-U file with one sentence per utterance, in corpus order.
    #[arg(long)]
    pub parses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Probability that the incomplete turn contains a pronoun.
    #[arg(long)]
    pub coref_ratio: Option<f64>,
    /// Probability of an extra filler turn.
    #[arg(long)]
    pub filler_prob: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub input: PathBuf,
    /// Derive labels first instead of checking the stored ones.
    #[arg(long)]
    pub derive: bool,
    /// Most violations to print.
    #[arg(long, default_value_t = 20)]
    pub show: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EditOpKind {
    CorefToEllipsis,
    EllipsisToCoref,
    Both,
}

#[derive(Debug, Args)]
pub struct AugmentEditArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub op: EditOpKind,
    /// Pronoun list, one per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Write only the new samples.
    #[arg(long)]
    pub only_new: bool,
}

#[derive(Debug, Args)]
pub struct AugmentLlmArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Chat-completion URL; `mock://echo` answers offline with the
    /// unchanged dialogue.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub model: String,
    /// Most requests in flight.
    #[arg(long, default_value_t = 4)]
    pub cap: usize,
    /// JSON file of in-context examples; the bundled five by default.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub retries: u32,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Also write the original samples.
    #[arg(long)]
    pub keep_original: bool,
    /// Write rejected replies with their reasons here (JSON lines).
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    pub input: PathBuf,
    /// Write one adjacency dump per sample (JSON lines).
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus.
    #[arg(long)]
    pub train: PathBuf,
    /// Dev corpus for per-epoch exact match and best-checkpoint selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set epochs=5` or `--set model.heads=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Replace the model settings with the tiny preset; `--set` still applies on top.
    #[arg(long)]
    pub tiny: bool,
    /// Output directory for checkpoints and the log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Beam width; 1 is greedy.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Most generated tokens.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// One rewrite per line; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plain cross-attention (guidance forced to 0).
    #[arg(long)]
    pub unguided: bool,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Rewrites to score, one per line.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub hyp: Option<PathBuf>,
    /// Decode the corpus with this checkpoint, with and without guidance.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradModel {
    Tiny,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    pub model: GradModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

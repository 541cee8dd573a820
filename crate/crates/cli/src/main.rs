//! `dclm`: corpus conversion, synthetic data, training, evaluation and
//! model comparison for dialog-context language models.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//! divergence (including a failed gradient check).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dclm", version, about = "Dialog-context language models")]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert SwDA utterance CSV files into a corpus file.
    Convert(ConvertArgs),
    /// Generate a synthetic dialog corpus with a planted dependency.
    GenSynthetic(GenSyntheticArgs),
    /// Build the word, POS and dialog-act vocabularies from a corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a neural model or an n-gram baseline.
    Train(TrainArgs),
    /// Report perplexity of one model on a test corpus.
    Eval(EvalArgs),
    /// Compare several models on the same target tokens.
    Compare(CompareArgs),
    /// Check analytic gradients against finite differences on a toy model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// SwDA utterance CSV files.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenSyntheticArgs {
    #[arg(long, default_value_t = 2000)]
    dialogs: usize,
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    /// Turns per dialog.
    #[arg(long, default_value_t = 6)]
    turns: usize,
    /// self-echo, cross-echo or none.
    #[arg(long, default_value = "self-echo")]
    dependency: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    min_turn_len: usize,
    #[arg(long, default_value_t = 6)]
    max_turn_len: usize,
    /// Probability that an echoed token is replaced by a fresh draw.
    #[arg(long, default_value_t = 0.0)]
    copy_noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Maximum number of words besides <unk> and <eot>.
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
    /// Use only dialogs from the training folders.
    #[arg(long)]
    train_split: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// SingleTurn, BoWContext, DRNNLM, CCDCLM, IDCLM, ESIDCLM or DACLM.
    #[arg(long, required_unless_present = "ngram", conflicts_with = "ngram")]
    variant: Option<String>,
    /// Training corpus. Without --valid it is split by corpus folder.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Vocabulary file; built from the training dialogs and written to
    /// `<out>.vocab.json` when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training log; defaults to `<out>.trainlog.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Turns per window.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Sets embedding, hidden, external-state and dialog-act widths.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Train a modified Kneser-Ney n-gram model and write ARPA.
    #[arg(long)]
    ngram: bool,
    #[arg(long, default_value_t = 5, requires = "ngram")]
    order: usize,
    /// Let n-gram histories cross turn boundaries.
    #[arg(long, requires = "ngram")]
    cross_turn: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Neural checkpoint or ARPA file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Turns per window; neural models default to their own K, n-gram
    /// models to 1.
    #[arg(long)]
    k: Option<usize>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated model files.
    #[arg(long, required = true, value_delimiter = ',')]
    models: Vec<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// One of the --models entries; defaults to the first.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Window size shared by all models; defaults to the largest model K.
    #[arg(long)]
    k: Option<usize>,
    /// Tags shown per partition, most frequent first.
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 8)]
    dims: usize,
    #[arg(long, default_value_t = 20)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Number of random toy problems.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Convert(a) => commands::convert(a),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::BuildVocab(a) => commands::build_vocab(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

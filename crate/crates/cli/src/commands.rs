use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dclm_core::corpus::{
    generate_synthetic, make_windows, read_corpus_file, split_by_folder, split_for,
    swda::convert_swda, write_corpus, CorpusVocab, Dialog, DialogWindow, Split, SyntheticConfig,
    DEFAULT_MAX_TURN_LEN, DEFAULT_VOCAB_CAP,
};
use dclm_core::eval::{
    evaluate, relative_change, render_perplexity_table, render_relative_table, EvalReport,
    Partition, TurnScorer,
};
use dclm_core::models::{
    load_model, save_model, seeded_rng, LossScope, ModelCheckpoint, ModelConfig, ModelVariant,
};
use dclm_core::neural::checkpoint::MAGIC;
use dclm_core::ngram::{training_streams, write_arpa, ArpaModel, KnModel, NgramConfig};
use dclm_core::train::gradcheck::{check_gradients, toy_problem};
use dclm_core::train::{train as train_model, TrainConfig};
use dclm_core::Error;

use crate::{
    BuildVocabArgs, CompareArgs, ConvertArgs, EvalArgs, GenSyntheticArgs, GradcheckArgs, TrainArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A command line that is well-formed for clap but unusable.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(Error::Divergence { .. }) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> Result<File> {
    Ok(File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?)
}

/// `path` with `suffix` appended to its file name.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn read_dialogs(path: &Path) -> Result<Vec<Dialog>> {
    let parsed =
        read_corpus_file(path).with_context(|| format!("reading corpus {}", path.display()))?;
    for w in &parsed.warnings {
        log::warn!("{}: line {}: {}", path.display(), w.line, w.message);
    }
    Ok(parsed.dialogs)
}

pub fn convert(a: ConvertArgs) -> Result<u8> {
    let sources = a.input.iter().map(|p| open(p)).collect::<Result<Vec<_>>>()?;
    let dialogs = convert_swda(sources.into_iter().map(BufReader::new))?;
    write_corpus(&dialogs, create(&a.out)?)?;
    log::info!("wrote {} dialogs to {}", dialogs.len(), a.out.display());
    Ok(EXIT_OK)
}

pub fn gen_synthetic(a: GenSyntheticArgs) -> Result<u8> {
    let cfg = SyntheticConfig {
        dialog_count: a.dialogs,
        vocab_size: a.vocab_size,
        turns_per_dialog: a.turns,
        dependency: a.dependency.parse()?,
        seed: a.seed,
        min_turn_len: a.min_turn_len,
        max_turn_len: a.max_turn_len,
        copy_noise: a.copy_noise,
    };
    let dialogs = generate_synthetic(&cfg)?;
    write_corpus(&dialogs, create(&a.out)?)?;
    log::info!("wrote {} dialogs to {}", dialogs.len(), a.out.display());
    Ok(EXIT_OK)
}

pub fn build_vocab(a: BuildVocabArgs) -> Result<u8> {
    let mut dialogs = read_dialogs(&a.corpus)?;
    if a.train_split {
        dialogs.retain(|d| matches!(split_for(&d.dialog_id), Ok(Split::Train)));
    }
    let vocab = CorpusVocab::build(&dialogs, a.cap)?;
    vocab.save(&a.out)?;
    log::info!(
        "{} words, {} POS tags, {} dialog acts; fingerprint {:016x}",
        vocab.words.len(),
        vocab.pos.len(),
        vocab.da.len(),
        vocab.fingerprint()
    );
    Ok(EXIT_OK)
}

/// Defaults, then the config file, then flags.
fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_kv_file(path).map_err(|e| match e {
            Error::Parse { .. } => usage(format!("{}: {e}", path.display())),
            other => other.into(),
        })?,
        None => TrainConfig::default(),
    };
    let flags = [
        ("k", a.k.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("max_epochs", a.epochs.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("learning_rate", a.learning_rate.map(|v| v.to_string())),
        ("dims", a.dims.map(|v| v.to_string())),
        ("threads", a.threads.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            cfg.set(key, &value)?;
        }
    }
    for kv in &a.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<u8> {
    let cfg = train_config(&a)?;
    let variant = match &a.variant {
        Some(name) => Some(name.parse::<ModelVariant>()?),
        None => None,
    };
    let corpus = read_dialogs(&a.corpus)?;
    let (train_d, valid_d) = match &a.valid {
        Some(valid) => (corpus, read_dialogs(valid)?),
        None => {
            let splits = split_by_folder(corpus)?;
            (splits.train, splits.valid)
        }
    };
    let vocab = match &a.vocab {
        Some(path) => CorpusVocab::load(path)?,
        None => {
            let vocab = CorpusVocab::build(&train_d, DEFAULT_VOCAB_CAP)?;
            let path = with_suffix(&a.out, ".vocab.json");
            vocab.save(&path)?;
            log::info!("vocabulary written to {}", path.display());
            vocab
        }
    };
    let fingerprint = vocab.fingerprint();
    let valid_w = make_windows(&valid_d, &vocab, cfg.k, cfg.max_turn_len);

    let Some(variant) = variant else {
        let config = NgramConfig {
            order: a.order,
            cross_turn: a.cross_turn,
        };
        let streams = training_streams(&train_d, &vocab, cfg.max_turn_len, a.cross_turn);
        let model = KnModel::train(&streams, vocab.words.len(), config)?;
        let mut out = create(&a.out)?;
        write_arpa(&model, &vocab.words, Some(fingerprint), &mut out)?;
        out.flush()?;
        if !valid_w.is_empty() {
            log::info!("validation perplexity {:.3}", model.perplexity(&valid_w)?);
        }
        return Ok(EXIT_OK);
    };

    let train_w = make_windows(&train_d, &vocab, cfg.k, cfg.max_turn_len);
    let outcome = train_model(
        variant,
        &cfg,
        vocab.words.len(),
        vocab.da.len(),
        &train_w,
        &valid_w,
        |r| {
            log::info!(
                "epoch {} train loss {:.4} valid perplexity {:.3}{}",
                r.epoch,
                r.train_loss,
                r.valid_perplexity,
                if r.best { " (best)" } else { "" }
            )
        },
    )?;
    save_model(&a.out, &outcome.model, Some(fingerprint))?;
    let log_path = a.log.unwrap_or_else(|| with_suffix(&a.out, ".trainlog.jsonl"));
    let mut log_out = create(&log_path)?;
    outcome.log.write_jsonl(&mut log_out)?;
    log_out.flush()?;
    if let Some(best) = outcome.log.best_epoch() {
        log::info!(
            "best epoch {} with validation perplexity {:.3}",
            best.epoch,
            best.valid_perplexity
        );
    }
    Ok(EXIT_OK)
}

enum LoadedModel {
    Neural(ModelCheckpoint),
    Ngram(ArpaModel),
}

impl LoadedModel {
    fn load(path: &Path, vocab: &CorpusVocab) -> Result<Self> {
        let mut head = [0u8; 4];
        let n = open(path)?.read(&mut head).map_err(|e| Error::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let model = if n == 4 && &head == MAGIC {
            LoadedModel::Neural(load_model(path)?)
        } else {
            let arpa = ArpaModel::read(BufReader::new(open(path)?), &vocab.words)
                .with_context(|| format!("reading {}", path.display()))?;
            LoadedModel::Ngram(arpa)
        };
        if let Some(fp) = model.fingerprint() {
            if fp != vocab.fingerprint() {
                return Err(Error::Mismatch(format!(
                    "{} was trained with vocabulary {fp:016x}, not {:016x}",
                    path.display(),
                    vocab.fingerprint()
                ))
                .into());
            }
        }
        Ok(model)
    }

    fn fingerprint(&self) -> Option<u64> {
        match self {
            LoadedModel::Neural(c) => c.vocab_fingerprint,
            LoadedModel::Ngram(m) => m.meta().vocab_fingerprint,
        }
    }

    fn scorer(&self) -> &dyn TurnScorer {
        match self {
            LoadedModel::Neural(c) => &c.model,
            LoadedModel::Ngram(m) => m,
        }
    }

    fn k(&self) -> Option<usize> {
        self.scorer().required_k()
    }

    fn variant(&self) -> String {
        match self {
            LoadedModel::Neural(c) => c.model.variant().display_name().to_string(),
            LoadedModel::Ngram(m) => format!("{}-gram KN", m.order()),
        }
    }
}

fn test_windows(path: &Path, vocab: &CorpusVocab, k: usize) -> Result<Vec<DialogWindow>> {
    let dialogs = read_dialogs(path)?;
    Ok(make_windows(&dialogs, vocab, k, DEFAULT_MAX_TURN_LEN))
}

fn model_id(path: &Path) -> String {
    path.display().to_string()
}

pub fn eval(a: EvalArgs) -> Result<u8> {
    let vocab = CorpusVocab::load(&a.vocab)?;
    let model = LoadedModel::load(&a.model, &vocab)?;
    let k = a.k.or(model.k()).unwrap_or(1);
    let windows = test_windows(&a.test, &vocab, k)?;
    let report = evaluate(
        model.scorer(),
        &model_id(&a.model),
        &model.variant(),
        &windows,
        k,
        &vocab,
        a.threads,
    )?;
    let mut stdout = std::io::stdout().lock();
    if a.json {
        writeln!(stdout, "{}", report.to_json()?)?;
    } else {
        write!(stdout, "{}", render_perplexity_table(&[&report]))?;
    }
    Ok(EXIT_OK)
}

pub fn compare(a: CompareArgs) -> Result<u8> {
    let vocab = CorpusVocab::load(&a.vocab)?;
    let baseline = a.baseline.clone().unwrap_or_else(|| a.models[0].clone());
    let Some(baseline_index) = a.models.iter().position(|m| *m == baseline) else {
        return Err(usage(format!(
            "baseline {} is not one of --models",
            baseline.display()
        )));
    };
    let models = a
        .models
        .iter()
        .map(|p| LoadedModel::load(p, &vocab))
        .collect::<Result<Vec<_>>>()?;

    // Every model scores the same target turns: windows are cut at the
    // shared K and trimmed to each model's own K.
    let k = a
        .k
        .or_else(|| models.iter().filter_map(LoadedModel::k).max())
        .unwrap_or(1);
    let windows = test_windows(&a.test, &vocab, k)?;
    let mut reports = Vec::with_capacity(models.len());
    for (path, model) in a.models.iter().zip(&models) {
        let model_k = model.k().unwrap_or(k);
        if model_k > k {
            return Err(Error::Mismatch(format!(
                "{} needs K={model_k}, larger than the shared K={k}",
                path.display()
            ))
            .into());
        }
        let own: Vec<DialogWindow> = windows.iter().map(|w| w.truncated(model_k)).collect();
        let mut report = evaluate(
            model.scorer(),
            &model_id(path),
            &model.variant(),
            &own,
            model_k,
            &vocab,
            a.threads,
        )?;
        report.baseline_id = Some(model_id(&baseline));
        reports.push(report);
    }
    let base = &reports[baseline_index];
    let changes = reports
        .iter()
        .map(|r| relative_change(r, base))
        .collect::<dclm_core::Result<Vec<_>>>()?;

    let mut stdout = std::io::stdout().lock();
    if a.json {
        let mut sorted: Vec<&EvalReport> = reports.iter().collect();
        sorted.sort_by(|x, y| x.overall.perplexity.total_cmp(&y.overall.perplexity));
        let doc = serde_json::json!({
            "baseline": model_id(&baseline),
            "reports": sorted,
            "relative_changes": changes,
        });
        writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        let refs: Vec<&EvalReport> = reports.iter().collect();
        write!(stdout, "{}", render_perplexity_table(&refs))?;
        writeln!(stdout, "\nrelative perplexity change vs {}", model_id(&baseline))?;
        write!(stdout, "\n{}", render_relative_table(Partition::Pos, base, &changes, a.top))?;
        write!(stdout, "\n{}", render_relative_table(Partition::DialogAct, base, &changes, a.top))?;
    }
    Ok(EXIT_OK)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<u8> {
    let variant: ModelVariant = a.variant.parse()?;
    let mut cfg = ModelConfig::with_dims(a.vocab_size, 8, a.dims, a.k);
    cfg.l2_lambda = 1e-4;
    let mut worst = 0.0f64;
    let mut stdout = std::io::stdout().lock();
    for seed in 0..a.seeds {
        let mut rng = seeded_rng(seed);
        let (model, windows) = toy_problem(variant, cfg, 2, 6, &mut rng)?;
        let refs: Vec<&DialogWindow> = windows.iter().collect();
        let report = check_gradients(&model, &refs, a.epsilon, LossScope::TargetTurn)?;
        let at = report.worst.map(|w| w.parameter).unwrap_or_default();
        writeln!(
            stdout,
            "seed {seed}: max relative error {:.3e} over {} elements (worst {at})",
            report.max_relative_error, report.checked
        )?;
        if report.max_relative_error.is_nan() || report.max_relative_error > worst {
            worst = report.max_relative_error;
        }
    }
    let ok = worst <= a.tolerance;
    writeln!(
        stdout,
        "{variant}: max relative error {worst:.3e} ({} tolerance {:.0e})",
        if ok { "within" } else { "exceeds" },
        a.tolerance
    )?;
    Ok(if ok { EXIT_OK } else { EXIT_NUMERIC })
}

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusVocab, DialogWindow, TagSet};
use crate::error::{Error, Result};
use crate::models::{DialogModel, TokenRecord};
use crate::ngram::{ArpaModel, KnModel};

/// Anything that assigns log probabilities to target-turn tokens.
pub trait TurnScorer: Sync {
    fn score_window(&self, window: &DialogWindow) -> Result<Vec<TokenRecord>>;

    /// Window size the scorer was built for; `None` accepts any.
    fn required_k(&self) -> Option<usize>;
}

impl TurnScorer for DialogModel {
    fn score_window(&self, window: &DialogWindow) -> Result<Vec<TokenRecord>> {
        self.score_turn(window)
    }

    fn required_k(&self) -> Option<usize> {
        Some(self.config().k)
    }
}

fn records_from(window: &DialogWindow, logprobs: Vec<f64>) -> Vec<TokenRecord> {
    let t = &window.target;
    logprobs
        .into_iter()
        .enumerate()
        .map(|(i, logprob)| TokenRecord {
            token: t.tokens[i],
            pos: t.pos[i],
            da: t.da[i],
            logprob,
        })
        .collect()
}

impl TurnScorer for KnModel {
    fn score_window(&self, window: &DialogWindow) -> Result<Vec<TokenRecord>> {
        Ok(records_from(window, self.window_logprobs(window)))
    }

    fn required_k(&self) -> Option<usize> {
        None
    }
}

impl TurnScorer for ArpaModel {
    fn score_window(&self, window: &DialogWindow) -> Result<Vec<TokenRecord>> {
        Ok(records_from(window, self.window_logprobs(window)))
    }

    fn required_k(&self) -> Option<usize> {
        None
    }
}

/// Order-independent sum: each term is rounded to a multiple of 2^-64
/// and accumulated as an integer, so any permutation of the same terms
/// gives the same total and partitions add up exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ExactSum(i128);

const EXACT_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

impl ExactSum {
    fn add(&mut self, x: f64) {
        self.0 += (x * EXACT_SCALE).round() as i128;
    }

    fn value(self) -> f64 {
        self.0 as f64 / EXACT_SCALE
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    tokens: usize,
    nll: ExactSum,
}

impl Accumulator {
    fn stats(self) -> TagStats {
        TagStats::new(self.tokens, self.nll.value())
    }
}

/// Token count, summed negative log-likelihood (nats) and perplexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub token_count: usize,
    pub total_neg_logprob: f64,
    pub perplexity: f64,
}

impl TagStats {
    pub fn new(token_count: usize, total_neg_logprob: f64) -> Self {
        let perplexity = if token_count == 0 {
            f64::NAN
        } else {
            (total_neg_logprob / token_count as f64).exp()
        };
        TagStats {
            token_count,
            total_neg_logprob,
            perplexity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub variant: String,
    pub k: usize,
    pub overall: TagStats,
    pub per_pos_tag: BTreeMap<String, TagStats>,
    pub per_da_tag: BTreeMap<String, TagStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_id: Option<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn tag_name(tags: &TagSet, id: u32) -> String {
    tags.tag(id).map_or_else(|| format!("#{id}"), str::to_string)
}

/// Scores every window's target turn and aggregates overall, per-POS and
/// per-dialog-act statistics.
///
/// Windows are scored on up to `threads` workers; the report does not
/// depend on the thread count or on window order.
pub fn evaluate(
    scorer: &dyn TurnScorer,
    model_id: &str,
    variant: &str,
    windows: &[DialogWindow],
    k: usize,
    vocab: &CorpusVocab,
    threads: usize,
) -> Result<EvalReport> {
    if let Some(model_k) = scorer.required_k() {
        if model_k != k {
            return Err(Error::Mismatch(format!(
                "model {model_id} was trained with K={model_k} but evaluation requested K={k}"
            )));
        }
    }
    if let Some(w) = windows.iter().find(|w| w.k() != k) {
        return Err(Error::Mismatch(format!(
            "window from {} has {} turns, expected K={k}",
            w.dialog_id,
            w.k()
        )));
    }
    if windows.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let score_all = || -> Result<Vec<Vec<TokenRecord>>> {
        windows.par_iter().map(|w| scorer.score_window(w)).collect()
    };
    let scored = if threads <= 1 {
        windows.iter().map(|w| scorer.score_window(w)).collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(score_all)?
    };
    let mut overall = Accumulator::default();
    let mut pos: BTreeMap<u32, Accumulator> = BTreeMap::new();
    let mut da: BTreeMap<u32, Accumulator> = BTreeMap::new();
    for r in scored.iter().flatten() {
        if !r.logprob.is_finite() {
            return Err(Error::InvalidTensor(format!(
                "non-finite log probability for token {}",
                r.token
            )));
        }
        for acc in [
            &mut overall,
            pos.entry(r.pos).or_default(),
            da.entry(r.da).or_default(),
        ] {
            acc.tokens += 1;
            acc.nll.add(-r.logprob);
        }
    }
    Ok(EvalReport {
        model_id: model_id.to_string(),
        variant: variant.to_string(),
        k,
        overall: overall.stats(),
        per_pos_tag: pos
            .into_iter()
            .map(|(id, a)| (tag_name(&vocab.pos, id), a.stats()))
            .collect(),
        per_da_tag: da
            .into_iter()
            .map(|(id, a)| (tag_name(&vocab.da, id), a.stats()))
            .collect(),
        baseline_id: None,
    })
}

/// Percent perplexity change of a model against a baseline; negative
/// numbers are gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub model_id: String,
    pub baseline_id: String,
    pub overall: f64,
    pub per_pos_tag: BTreeMap<String, f64>,
    pub per_da_tag: BTreeMap<String, f64>,
}

fn percent_change(model: f64, baseline: f64) -> f64 {
    100.0 * (model - baseline) / baseline
}

fn partition_change(
    what: &str,
    model: &BTreeMap<String, TagStats>,
    baseline: &BTreeMap<String, TagStats>,
) -> Result<BTreeMap<String, f64>> {
    let same_keys = model.len() == baseline.len() && model.keys().eq(baseline.keys());
    if !same_keys {
        return Err(Error::Mismatch(format!("{what} partitions cover different tags")));
    }
    model
        .iter()
        .map(|(tag, m)| {
            let b = &baseline[tag];
            if m.token_count != b.token_count {
                return Err(Error::Mismatch(format!(
                    "{what} tag {tag}: {} tokens vs {} in the baseline",
                    m.token_count, b.token_count
                )));
            }
            Ok((tag.clone(), percent_change(m.perplexity, b.perplexity)))
        })
        .collect()
}

/// `100 * (ppl_model - ppl_baseline) / ppl_baseline` overall and per tag.
/// Both reports must partition the same tokens identically.
pub fn relative_change(report: &EvalReport, baseline: &EvalReport) -> Result<RelativeChange> {
    if report.overall.token_count != baseline.overall.token_count {
        return Err(Error::Mismatch(format!(
            "reports cover {} and {} tokens",
            report.overall.token_count, baseline.overall.token_count
        )));
    }
    Ok(RelativeChange {
        model_id: report.model_id.clone(),
        baseline_id: baseline.model_id.clone(),
        overall: percent_change(report.overall.perplexity, baseline.overall.perplexity),
        per_pos_tag: partition_change("POS", &report.per_pos_tag, &baseline.per_pos_tag)?,
        per_da_tag: partition_change("dialog-act", &report.per_da_tag, &baseline.per_da_tag)?,
    })
}

/// Percent perplexity reduction of a contextual model over a single-turn
/// one: `100 * (single - contextual) / single`.
pub fn headline_gain(contextual_ppl: f64, single_turn_ppl: f64) -> f64 {
    100.0 * (single_turn_ppl - contextual_ppl) / single_turn_ppl
}

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::corpus::{TAG_SENTINEL, TAG_UNK};
use crate::eval::{EvalReport, RelativeChange, TagStats};

/// The `n` most frequent tags, excluding the reserved `<eot>` and `<unk>`
/// tags. Ties go to the lexicographically smaller tag.
pub fn top_tags(stats: &BTreeMap<String, TagStats>, n: usize) -> Vec<String> {
    let mut tags: Vec<(&String, usize)> = stats
        .iter()
        .filter(|(t, _)| t.as_str() != TAG_SENTINEL && t.as_str() != TAG_UNK)
        .map(|(t, s)| (t, s.token_count))
        .collect();
    tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    tags.into_iter().take(n).map(|(t, _)| t.clone()).collect()
}

/// Models ordered by perplexity, one row each.
pub fn render_perplexity_table(reports: &[&EvalReport]) -> String {
    let mut rows: Vec<&EvalReport> = reports.to_vec();
    rows.sort_by(|a, b| a.overall.perplexity.total_cmp(&b.overall.perplexity));
    let width = rows
        .iter()
        .map(|r| r.model_id.len())
        .chain(std::iter::once(5))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<18}  {:>3}  {:>9}  {:>10}", "model", "variant", "K", "tokens", "perplexity");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:<18}  {:>3}  {:>9}  {:>10.2}",
            r.model_id, r.variant, r.k, r.overall.token_count, r.overall.perplexity
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Pos,
    DialogAct,
}

/// Percent perplexity change per tag for each model against the baseline,
/// over the baseline's `n` most frequent tags. Negative numbers are gains.
pub fn render_relative_table(
    partition: Partition,
    baseline: &EvalReport,
    changes: &[RelativeChange],
    n: usize,
) -> String {
    let (stats, title) = match partition {
        Partition::Pos => (&baseline.per_pos_tag, "POS tag"),
        Partition::DialogAct => (&baseline.per_da_tag, "dialog act"),
    };
    let tags = top_tags(stats, n);
    let tag_width = tags.iter().map(String::len).chain([title.len(), 7]).max().unwrap_or(7);
    let col = |id: &str| id.len().max(9);
    let mut out = String::new();
    let _ = write!(out, "{title:<tag_width$}  {:>9}", "tokens");
    for c in changes {
        let _ = write!(out, "  {:>w$}", c.model_id, w = col(&c.model_id));
    }
    out.push('\n');
    let mut row = |label: &str, count: usize, value: &dyn Fn(&RelativeChange) -> Option<f64>| {
        let _ = write!(out, "{label:<tag_width$}  {count:>9}");
        for c in changes {
            let cell = value(c).map_or_else(|| "-".to_string(), |v| format!("{v:+.1}%"));
            let _ = write!(out, "  {cell:>w$}", w = col(&c.model_id));
        }
        out.push('\n');
    };
    for tag in &tags {
        let per = |c: &RelativeChange| match partition {
            Partition::Pos => c.per_pos_tag.get(tag).copied(),
            Partition::DialogAct => c.per_da_tag.get(tag).copied(),
        };
        row(tag, stats[tag].token_count, &per);
    }
    row("overall", baseline.overall.token_count, &|c| Some(c.overall));
    out
}

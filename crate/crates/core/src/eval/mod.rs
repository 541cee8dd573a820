//! Last-turn perplexity with per-POS and per-dialog-act breakdowns.

mod render;
mod report;

pub use render::{render_perplexity_table, render_relative_table, top_tags, Partition};
pub use report::{
    evaluate, headline_gain, relative_change, EvalReport, RelativeChange, TagStats, TurnScorer,
};

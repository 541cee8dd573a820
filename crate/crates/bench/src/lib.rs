//! Shared fixtures for the benchmarks.

use dclm_core::corpus::{
    generate_synthetic, make_windows, CorpusVocab, Dependency, Dialog, DialogWindow,
    SyntheticConfig,
    DEFAULT_MAX_TURN_LEN,
};

pub struct Fixture {
    pub dialogs: Vec<Dialog>,
    pub vocab: CorpusVocab,
    pub windows: Vec<DialogWindow>,
}

/// Windows of `k` turns from a small cross-echo synthetic corpus.
pub fn synthetic(k: usize, dialogs: usize, vocab_size: usize) -> Fixture {
    let dialogs = generate_synthetic(&SyntheticConfig {
        dialog_count: dialogs,
        vocab_size,
        dependency: Dependency::CrossEcho,
        seed: 11,
        ..Default::default()
    })
    .expect("valid synthetic config");
    let vocab = CorpusVocab::build(&dialogs, 10_000).expect("non-empty corpus");
    let windows = make_windows(&dialogs, &vocab, k, DEFAULT_MAX_TURN_LEN);
    Fixture {
        dialogs,
        vocab,
        windows,
    }
}

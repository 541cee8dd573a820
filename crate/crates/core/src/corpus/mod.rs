//! Dialog corpora: ingestion, vocabulary, windowing and synthetic data.

mod dialog;
pub mod swda;
pub mod synthetic;
mod vocab;
mod window;

pub use dialog::{
    parse_corpus, split_by_folder, split_for, write_corpus, CorpusSplits, Dialog, ParseWarning,
    ParsedCorpus, Speaker, Split, Turn, Utterance,
};
pub use synthetic::{generate_synthetic, Dependency, SyntheticConfig};
pub use vocab::{
    build_vocab, CorpusVocab, TagSet, Vocabulary, DEFAULT_VOCAB_CAP, EOT, EOT_ID, TAG_SENTINEL,
    TAG_SENTINEL_ID, TAG_UNK, TAG_UNK_ID, UNK, UNK_ID,
};
pub use window::{
    decode_turn, encode_turn, make_windows, DialogWindow, EncodedTurn, DEFAULT_MAX_TURN_LEN,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Reads a corpus file, returning dialogs and non-fatal warnings.
pub fn read_corpus_file(path: &Path) -> Result<ParsedCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_corpus(std::io::BufReader::new(file))
}

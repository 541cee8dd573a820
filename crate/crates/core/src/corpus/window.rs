use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusVocab, Dialog, Speaker, Turn, Utterance, EOT_ID, TAG_SENTINEL_ID};

pub const DEFAULT_MAX_TURN_LEN: usize = 160;

/// A turn as model input: token ids ending in `<eot>`, with per-token tag ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedTurn {
    pub speaker: Speaker,
    pub tokens: Vec<u32>,
    /// POS id per token; the sentinel for `<eot>`.
    pub pos: Vec<u32>,
    /// Dialog-act id of the containing utterance per token; the sentinel for `<eot>`.
    pub da: Vec<u32>,
    /// One dialog-act id per (possibly truncated) utterance, in order.
    pub utterance_das: Vec<u32>,
    /// Token count of each utterance after truncation.
    pub utterance_lens: Vec<usize>,
}

impl EncodedTurn {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// K consecutive turns: K-1 context turns and the scored target turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogWindow {
    pub dialog_id: String,
    pub context: Vec<EncodedTurn>,
    pub target: EncodedTurn,
}

impl DialogWindow {
    pub fn k(&self) -> usize {
        self.context.len() + 1
    }

    pub fn turns(&self) -> impl Iterator<Item = &EncodedTurn> {
        self.context.iter().chain(std::iter::once(&self.target))
    }

    /// The same target with only the last `k - 1` context turns, so models
    /// of different K can be scored on identical target turns.
    ///
    /// Panics if `k` is zero or larger than this window's K.
    pub fn truncated(&self, k: usize) -> DialogWindow {
        assert!(k >= 1 && k <= self.k(), "cannot cut a K={} window to K={k}", self.k());
        DialogWindow {
            dialog_id: self.dialog_id.clone(),
            context: self.context[self.context.len() + 1 - k..].to_vec(),
            target: self.target.clone(),
        }
    }
}

/// Concatenates a turn's utterances, truncates to `max_turn_len` tokens and
/// appends `<eot>`.
pub fn encode_turn(turn: &Turn, vocab: &CorpusVocab, max_turn_len: usize) -> EncodedTurn {
    let mut enc = EncodedTurn {
        speaker: turn.speaker,
        tokens: Vec::new(),
        pos: Vec::new(),
        da: Vec::new(),
        utterance_das: Vec::new(),
        utterance_lens: Vec::new(),
    };
    for utt in &turn.utterances {
        let room = max_turn_len - enc.tokens.len();
        if room == 0 {
            break;
        }
        let take = utt.tokens.len().min(room);
        let da = vocab.da.id(&utt.da_tag);
        for (tok, pos) in utt.tokens.iter().zip(&utt.pos_tags).take(take) {
            enc.tokens.push(vocab.words.id(tok));
            enc.pos.push(vocab.pos.id(pos));
            enc.da.push(da);
        }
        enc.utterance_das.push(da);
        enc.utterance_lens.push(take);
    }
    enc.tokens.push(EOT_ID);
    enc.pos.push(TAG_SENTINEL_ID);
    enc.da.push(TAG_SENTINEL_ID);
    enc
}

/// Inverse of [`encode_turn`] for in-vocabulary content.
pub fn decode_turn(turn: &EncodedTurn, vocab: &CorpusVocab) -> Turn {
    let mut utterances = Vec::with_capacity(turn.utterance_lens.len());
    let mut at = 0;
    for (&len, &da) in turn.utterance_lens.iter().zip(&turn.utterance_das) {
        let span = at..at + len;
        utterances.push(Utterance {
            tokens: turn.tokens[span.clone()]
                .iter()
                .map(|&id| vocab.words.token(id).unwrap_or_default().to_string())
                .collect(),
            pos_tags: turn.pos[span]
                .iter()
                .map(|&id| vocab.pos.tag(id).unwrap_or_default().to_string())
                .collect(),
            da_tag: vocab.da.tag(da).unwrap_or_default().to_string(),
        });
        at += len;
    }
    Turn {
        speaker: turn.speaker,
        utterances,
    }
}

/// Sliding windows of `k` consecutive turns (stride 1) within each dialog.
/// Dialogs with fewer than `k` turns contribute nothing.
pub fn make_windows(
    dialogs: &[Dialog],
    vocab: &CorpusVocab,
    k: usize,
    max_turn_len: usize,
) -> Vec<DialogWindow> {
    assert!(k >= 1, "windows need at least one turn");
    let mut windows = Vec::new();
    for d in dialogs {
        if d.turns.len() < k {
            continue;
        }
        let encoded: Vec<EncodedTurn> = d
            .turns
            .iter()
            .map(|t| encode_turn(t, vocab, max_turn_len))
            .collect();
        for span in encoded.windows(k) {
            windows.push(DialogWindow {
                dialog_id: d.dialog_id.clone(),
                context: span[..k - 1].to_vec(),
                target: span[k - 1].clone(),
            });
        }
    }
    windows
}

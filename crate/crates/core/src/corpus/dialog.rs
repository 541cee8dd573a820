use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::A => "A",
            Speaker::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<String>,
    #[serde(rename = "pos")]
    pub pos_tags: Vec<String>,
    #[serde(rename = "da")]
    pub da_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterances: Vec<Utterance>,
}

impl Turn {
    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub dialog_id: String,
    pub turns: Vec<Turn>,
}

/// Non-fatal findings from [`parse_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub dialogs: Vec<Dialog>,
    pub warnings: Vec<ParseWarning>,
}

/// Reads one JSON dialog record per line. Blank lines are skipped.
///
/// Tokens are lowercased. Consecutive turns by the same speaker are merged
/// into one turn and reported as a warning.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let dialog: Dialog = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let dialog = validate(dialog, line_no, &mut out.warnings)?;
        out.dialogs.push(dialog);
    }
    Ok(out)
}

fn validate(mut dialog: Dialog, line: usize, warnings: &mut Vec<ParseWarning>) -> Result<Dialog> {
    let fail = |reason: String| Error::Parse { line, reason };
    if dialog.dialog_id.is_empty() {
        return Err(fail("empty dialog_id".into()));
    }
    if dialog.turns.is_empty() {
        return Err(fail(format!("dialog {} has no turns", dialog.dialog_id)));
    }
    for (t, turn) in dialog.turns.iter_mut().enumerate() {
        if turn.utterances.is_empty() {
            return Err(fail(format!("turn {t} has no utterances")));
        }
        for (u, utt) in turn.utterances.iter_mut().enumerate() {
            if utt.tokens.is_empty() {
                return Err(fail(format!("turn {t}, utterance {u} has no tokens")));
            }
            if utt.tokens.len() != utt.pos_tags.len() {
                return Err(fail(format!(
                    "turn {t}, utterance {u}: {} tokens but {} POS tags",
                    utt.tokens.len(),
                    utt.pos_tags.len()
                )));
            }
            for tok in &mut utt.tokens {
                *tok = tok.to_lowercase();
            }
        }
    }
    let mut merged: Vec<Turn> = Vec::with_capacity(dialog.turns.len());
    for (t, turn) in dialog.turns.into_iter().enumerate() {
        match merged.last_mut() {
            Some(prev) if prev.speaker == turn.speaker => {
                warnings.push(ParseWarning {
                    line,
                    message: format!(
                        "dialog {}: turn {t} repeats speaker {}; merged into previous turn",
                        dialog.dialog_id, turn.speaker
                    ),
                });
                log::warn!("line {line}: merged consecutive turns by speaker {}", turn.speaker);
                prev.utterances.extend(turn.utterances);
            }
            _ => merged.push(turn),
        }
    }
    dialog.turns = merged;
    Ok(dialog)
}

/// Writes dialogs in the line-delimited JSON corpus format.
pub fn write_corpus<W: std::io::Write>(dialogs: &[Dialog], mut out: W) -> Result<()> {
    for d in dialogs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Default, Clone)]
pub struct CorpusSplits {
    pub train: Vec<Dialog>,
    pub valid: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

/// Folder assignment: sw00-sw09 train, sw10 test, sw11-sw13 validation.
pub fn split_for(dialog_id: &str) -> Result<Split> {
    let folder = dialog_id
        .strip_prefix("sw")
        .and_then(|rest| rest.get(..2))
        .filter(|f| f.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|f| f.parse::<u32>().ok())
        .ok_or_else(|| Error::UnknownFolder(dialog_id.to_string()))?;
    match folder {
        0..=9 => Ok(Split::Train),
        10 => Ok(Split::Test),
        11..=13 => Ok(Split::Valid),
        _ => Err(Error::UnknownFolder(dialog_id.to_string())),
    }
}

pub fn split_by_folder(dialogs: Vec<Dialog>) -> Result<CorpusSplits> {
    let mut splits = CorpusSplits::default();
    for d in dialogs {
        match split_for(&d.dialog_id)? {
            Split::Train => splits.train.push(d),
            Split::Valid => splits.valid.push(d),
            Split::Test => splits.test.push(d),
        }
    }
    Ok(splits)
}

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Dialog;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOT: &str = "<eot>";
pub const UNK_ID: u32 = 0;
pub const EOT_ID: u32 = 1;
pub const DEFAULT_VOCAB_CAP: usize = 10_000;

/// Token <-> id map. Ids 0 and 1 are `<unk>` and `<eot>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered list of non-reserved entries.
    pub fn from_entries<I: IntoIterator<Item = String>>(entries: I) -> Result<Self> {
        let mut tokens = vec![UNK.to_string(), EOT.to_string()];
        tokens.extend(entries);
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Keeps the `cap` most frequent training tokens, ties broken
/// lexicographically.
pub fn build_vocab(train: &[Dialog], cap: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::Empty("vocabulary needs a nonempty training corpus"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in train
        .iter()
        .flat_map(|d| &d.turns)
        .flat_map(|t| &t.utterances)
        .flat_map(|u| &u.tokens)
    {
        if tok != UNK && tok != EOT {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Vocabulary::from_entries(ranked.into_iter().map(|(t, _)| t.to_string()))
}

pub const TAG_SENTINEL: &str = "<eot>";
pub const TAG_UNK: &str = "<unk>";
/// Tag id given to `<eot>` positions in both tag sets.
pub const TAG_SENTINEL_ID: u32 = 0;
pub const TAG_UNK_ID: u32 = 1;

/// POS or dialog-act inventory. Id 0 is the `<eot>` sentinel, id 1 the
/// unknown tag; the rest are ordered by training frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSet {
    tags: Vec<String>,
    index: HashMap<String, u32>,
}

impl TagSet {
    pub fn from_entries<I: IntoIterator<Item = String>>(entries: I) -> Result<Self> {
        let mut tags = vec![TAG_SENTINEL.to_string(), TAG_UNK.to_string()];
        tags.extend(entries);
        let mut index = HashMap::new();
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate tag `{t}`")));
            }
        }
        Ok(TagSet { tags, index })
    }

    fn from_counts<'a>(items: impl Iterator<Item = &'a String>) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in items {
            if t != TAG_SENTINEL && t != TAG_UNK {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, tag: &str) -> u32 {
        self.index.get(tag).copied().unwrap_or(TAG_UNK_ID)
    }

    pub fn tag(&self, id: u32) -> Option<&str> {
        self.tags.get(id as usize).map(String::as_str)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Word vocabulary plus POS and dialog-act inventories, persisted together
/// and identified by a content fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusVocab {
    pub words: Vocabulary,
    pub pos: TagSet,
    pub da: TagSet,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
    pos: Vec<String>,
    da: Vec<String>,
}

impl CorpusVocab {
    pub fn build(train: &[Dialog], cap: usize) -> Result<Self> {
        let words = build_vocab(train, cap)?;
        let utterances = || train.iter().flat_map(|d| &d.turns).flat_map(|t| &t.utterances);
        let pos = TagSet::from_counts(utterances().flat_map(|u| &u.pos_tags))?;
        let da = TagSet::from_counts(utterances().map(|u| &u.da_tag))?;
        Ok(CorpusVocab { words, pos, da })
    }

    fn to_file(&self) -> VocabFile {
        VocabFile {
            words: self.words.tokens()[2..].to_vec(),
            pos: self.pos.tags()[2..].to_vec(),
            da: self.da.tags()[2..].to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: VocabFile = serde_json::from_str(text)?;
        Ok(CorpusVocab {
            words: Vocabulary::from_entries(f.words)?,
            pos: TagSet::from_entries(f.pos)?,
            da: TagSet::from_entries(f.da)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    /// First 8 bytes of the SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_json().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Speaker, Turn, Utterance};

    fn dialog_of(tokens: &[&str]) -> Dialog {
        Dialog {
            dialog_id: "sw0000".into(),
            turns: vec![Turn {
                speaker: Speaker::A,
                utterances: vec![Utterance {
                    tokens: tokens.iter().map(|s| s.to_string()).collect(),
                    pos_tags: tokens.iter().map(|_| "NN".to_string()).collect(),
                    da_tag: "sd".into(),
                }],
            }],
        }
    }

    #[test]
    fn reserved_ids_plus_distinct_tokens() {
        let v = build_vocab(&[dialog_of(&["a", "b", "c", "d", "e", "a"])], DEFAULT_VOCAB_CAP).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(UNK_ID), Some(UNK));
        assert_eq!(v.token(EOT_ID), Some(EOT));
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("zebra"), UNK_ID);
    }

    #[test]
    fn cap_ties_break_lexicographically() {
        let v = build_vocab(&[dialog_of(&["x", "x", "y", "y", "b", "a", "c"])], 3).unwrap();
        assert_eq!(&v.tokens()[2..], ["x", "y", "a"]);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(build_vocab(&[], 10).is_err());
    }

    #[test]
    fn json_round_trip_preserves_fingerprint() {
        let cv = CorpusVocab::build(&[dialog_of(&["a", "b", "a"])], 10).unwrap();
        let back = CorpusVocab::from_json(&cv.to_json()).unwrap();
        assert_eq!(back, cv);
        assert_eq!(back.fingerprint(), cv.fingerprint());
        let other = CorpusVocab::build(&[dialog_of(&["a", "c"])], 10).unwrap();
        assert_ne!(other.fingerprint(), cv.fingerprint());
    }
}

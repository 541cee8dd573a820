//! Conversion from the SwDA utterance CSV layout.
//!
//! Each CSV row is one utterance. Columns used:
//!
//! * `swda_filename` - e.g. `sw00utt/sw_0001_4325.utt`; the directory gives
//!   the corpus folder (`sw00`) and the file stem the conversation number.
//! * `transcript_index` - utterance order within the conversation.
//! * `caller` - `A` or `B`.
//! * `act_tag` - SWBD-DAMSL tag, mapped to the clustered class name.
//! * `pos` - space-separated `word/TAG` pairs.
//!
//! Rows with no `word/TAG` pairs (non-verbal segments) are dropped. The
//! continuation tag `+` takes the caller's previous dialog act. Dialog ids are
//! `<folder>_<conversation>`, e.g. `sw00_4325`.

use std::collections::BTreeMap;
use std::io::Read;

use crate::corpus::{Dialog, Speaker, Turn, Utterance};
use crate::error::{Error, Result};

const ACT_NAMES: &[(&str, &str)] = &[
    ("sd", "Statement-non-opinion"),
    ("b", "Acknowledge"),
    ("sv", "Statement-opinion"),
    ("aa", "Agree/Accept"),
    ("%", "Abandoned-or-Turn-Exit"),
    ("ba", "Appreciation"),
    ("qy", "Yes-No-Question"),
    ("x", "Non-verbal"),
    ("ny", "Yes-answers"),
    ("fc", "Conventional-closing"),
    ("qw", "Wh-Question"),
    ("nn", "No-answers"),
    ("bk", "Response-Acknowledgement"),
    ("h", "Hedge"),
    ("qy^d", "Declarative-Yes-No-Question"),
    ("fo_o_fw_\"_by_bc", "Other"),
    ("bh", "Backchannel-in-question-form"),
    ("^q", "Quotation"),
    ("bf", "Summarize/reformulate"),
    ("na", "Affirmative-non-yes-answers"),
    ("ad", "Action-directive"),
    ("^2", "Collaborative-Completion"),
    ("b^m", "Repeat-phrase"),
    ("qo", "Open-Question"),
    ("qh", "Rhetorical-Questions"),
    ("^h", "Hold-before-answer/agreement"),
    ("ar", "Reject"),
    ("ng", "Negative-non-no-answers"),
    ("br", "Signal-non-understanding"),
    ("no", "Other-answers"),
    ("fp", "Conventional-opening"),
    ("qrr", "Or-Clause"),
    ("arp_nd", "Dispreferred-answers"),
    ("t3", "3rd-party-talk"),
    ("oo_co_cc", "Offers-Options-Commits"),
    ("t1", "Self-talk"),
    ("bd", "Downplayer"),
    ("aap_am", "Maybe/Accept-part"),
    ("^g", "Tag-Question"),
    ("qw^d", "Declarative-Wh-Question"),
    ("fa", "Apology"),
    ("ft", "Thanking"),
];

/// Maps a raw SWBD-DAMSL tag to its clustered class name; `None` for `+`.
pub fn act_class(raw: &str) -> Option<String> {
    let tag = raw.trim();
    if tag == "+" {
        return None;
    }
    let tag = tag.split(',').next().unwrap_or(tag).trim();
    let tag = tag.trim_matches(|c| c == '(' || c == ')');
    let lookup = |t: &str| ACT_NAMES.iter().find(|(k, _)| *k == t).map(|(_, v)| v.to_string());
    if let Some(name) = lookup(tag) {
        return Some(name);
    }
    // Drop qualifiers such as `sd^e` or `qy^t`, keeping the base act.
    let base = tag.split('^').next().unwrap_or(tag);
    let base = base.strip_suffix('(').unwrap_or(base);
    Some(lookup(base).unwrap_or_else(|| tag.to_string()))
}

struct Row {
    index: u64,
    speaker: Speaker,
    act: Option<String>,
    tokens: Vec<String>,
    pos: Vec<String>,
}

fn parse_pos_field(field: &str) -> (Vec<String>, Vec<String>) {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for item in field.split_whitespace() {
        if let Some((word, tag)) = item.rsplit_once('/') {
            if !word.is_empty() && !tag.is_empty() {
                tokens.push(word.to_lowercase());
                tags.push(tag.to_string());
            }
        }
    }
    (tokens, tags)
}

/// Parses one SwDA utterance CSV and appends its rows, keyed by dialog id.
fn read_rows<R: Read>(input: R, into: &mut BTreeMap<String, Vec<Row>>) -> Result<()> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let (c_file, c_index, c_caller, c_act, c_pos) = (
        col("swda_filename")?,
        col("transcript_index")?,
        col("caller")?,
        col("act_tag")?,
        col("pos")?,
    );
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let bad = |reason: String| Error::Parse { line, reason };
        let file = record.get(c_file).unwrap_or_default();
        let dialog_id = dialog_id_from_filename(file)
            .ok_or_else(|| bad(format!("cannot derive dialog id from `{file}`")))?;
        let index = record
            .get(c_index)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| bad("transcript_index is not an integer".into()))?;
        let speaker = match record.get(c_caller).unwrap_or_default().trim() {
            "A" => Speaker::A,
            "B" => Speaker::B,
            other => return Err(bad(format!("unknown caller `{other}`"))),
        };
        let (tokens, pos) = parse_pos_field(record.get(c_pos).unwrap_or_default());
        into.entry(dialog_id).or_default().push(Row {
            index,
            speaker,
            act: act_class(record.get(c_act).unwrap_or_default()),
            tokens,
            pos,
        });
    }
    Ok(())
}

/// `sw00utt/sw_0001_4325.utt` -> `sw00_4325`.
fn dialog_id_from_filename(file: &str) -> Option<String> {
    let (dir, name) = file.rsplit_once('/')?;
    let dir = dir.rsplit('/').next()?;
    let folder = dir.strip_suffix("utt").unwrap_or(dir);
    if !(folder.len() == 4 && folder.starts_with("sw")) {
        return None;
    }
    let stem = name.split('.').next()?;
    let conv = stem.rsplit('_').next()?;
    Some(format!("{folder}_{conv}"))
}

fn rows_to_dialog(dialog_id: String, mut rows: Vec<Row>) -> Option<Dialog> {
    rows.sort_by_key(|r| r.index);
    let mut last_act: BTreeMap<Speaker, String> = BTreeMap::new();
    let mut turns: Vec<Turn> = Vec::new();
    for row in rows {
        let act = match row.act {
            Some(a) => a,
            None => last_act
                .get(&row.speaker)
                .cloned()
                .unwrap_or_else(|| "Other".to_string()),
        };
        last_act.insert(row.speaker, act.clone());
        if row.tokens.is_empty() {
            continue;
        }
        let utt = Utterance {
            tokens: row.tokens,
            pos_tags: row.pos,
            da_tag: act,
        };
        match turns.last_mut() {
            Some(t) if t.speaker == row.speaker => t.utterances.push(utt),
            _ => turns.push(Turn {
                speaker: row.speaker,
                utterances: vec![utt],
            }),
        }
    }
    (!turns.is_empty()).then_some(Dialog { dialog_id, turns })
}

/// Converts SwDA utterance CSV sources into dialogs, sorted by dialog id.
pub fn convert_swda<R: Read>(sources: impl IntoIterator<Item = R>) -> Result<Vec<Dialog>> {
    let mut rows = BTreeMap::new();
    for src in sources {
        read_rows(src, &mut rows)?;
    }
    Ok(rows
        .into_iter()
        .filter_map(|(id, r)| rows_to_dialog(id, r))
        .collect())
}

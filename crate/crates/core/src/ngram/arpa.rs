//! ARPA back-off format for the interpolated Kneser-Ney model.
//!
//! An interpolated model is written exactly: every observed n-gram carries its
//! interpolated probability, and every observed context its interpolation
//! weight as the back-off weight. Histories ending in the padding symbol are
//! listed with probability `-99` so their back-off weights can be stored.
//! A leading `# dclm ...` comment line carries order, history mode and the
//! vocabulary fingerprint; standard readers ignore text before `\data\`.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::corpus::{DialogWindow, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram::kn::window_logprobs;
use crate::ngram::{KnModel, NgramConfig, BOS};

pub const BOS_TOKEN: &str = "<s>";
const NO_PROB: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArpaMeta {
    pub config: NgramConfig,
    pub vocab_fingerprint: Option<u64>,
}

fn word(vocab: &Vocabulary, id: u32) -> &str {
    if id == BOS {
        BOS_TOKEN
    } else {
        vocab.token(id).expect("id within vocabulary")
    }
}

pub fn write_arpa<W: Write>(
    model: &KnModel,
    vocab: &Vocabulary,
    vocab_fingerprint: Option<u64>,
    mut out: W,
) -> Result<()> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::Mismatch(format!(
            "model has {} words, vocabulary {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    let order = model.order();
    // entries[n - 1]: sorted n-grams of order n
    let mut entries: Vec<BTreeSet<Vec<u32>>> = vec![BTreeSet::new(); order];
    entries[0].extend((0..vocab.len() as u32).map(|w| vec![w]));
    entries[0].insert(vec![BOS]);
    for n in 2..=order {
        for (ctx, counts) in model.trie().contexts(n) {
            for &w in counts.next.keys() {
                let mut g = ctx.clone();
                g.push(w);
                entries[n - 1].insert(g);
            }
        }
    }
    for n in 2..=order {
        for (ctx, counts) in model.trie().contexts(n) {
            if counts.total > 0 && !ctx.is_empty() {
                entries[ctx.len() - 1].insert(ctx.clone());
            }
        }
    }

    write!(out, "# dclm order={} cross_turn={}", order, model.config().cross_turn)?;
    if let Some(fp) = vocab_fingerprint {
        write!(out, " vocab_fingerprint={fp:016x}")?;
    }
    writeln!(out, "\n\n\\data\\")?;
    for (n, e) in entries.iter().enumerate() {
        writeln!(out, "ngram {}={}", n + 1, e.len())?;
    }
    for (n, e) in entries.iter().enumerate() {
        let n = n + 1;
        writeln!(out, "\n\\{n}-grams:")?;
        for g in e {
            let (ctx, w) = g.split_at(n - 1);
            let logp = if w[0] == BOS {
                NO_PROB
            } else {
                model.prob_at(n, ctx, w[0]).log10()
            };
            let words: Vec<&str> = g.iter().map(|&id| word(vocab, id)).collect();
            write!(out, "{logp}\t{}", words.join(" "))?;
            if n < order {
                if let Some(bo) = model.backoff_weight(g) {
                    write!(out, "\t{}", bo.log10())?;
                }
            }
            writeln!(out)?;
        }
    }
    writeln!(out, "\n\\end\\")?;
    out.flush()?;
    Ok(())
}

/// A back-off model read from an ARPA file.
#[derive(Debug, Clone)]
pub struct ArpaModel {
    meta: ArpaMeta,
    // tables[n - 1]: n-gram -> (log10 prob, log10 back-off)
    tables: Vec<HashMap<Vec<u32>, (f64, f64)>>,
}

impl ArpaModel {
    pub fn read<R: BufRead>(input: R, vocab: &Vocabulary) -> Result<Self> {
        let mut meta = ArpaMeta {
            config: NgramConfig {
                order: 0,
                cross_turn: false,
            },
            vocab_fingerprint: None,
        };
        let mut declared: Vec<usize> = Vec::new();
        let mut tables: Vec<HashMap<Vec<u32>, (f64, f64)>> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut ended = false;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let bad = |reason: String| Error::Arpa {
                line: line_no,
                reason,
            };
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix("# dclm") {
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("cross_turn", v)) => meta.config.cross_turn = v == "true",
                        Some(("vocab_fingerprint", v)) => {
                            meta.vocab_fingerprint = Some(
                                u64::from_str_radix(v, 16)
                                    .map_err(|_| bad(format!("bad fingerprint `{v}`")))?,
                            )
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if trimmed.is_empty() || ended {
                continue;
            }
            if trimmed == "\\data\\" {
                in_data = true;
                continue;
            }
            if !in_data {
                continue;
            }
            if trimmed == "\\end\\" {
                ended = true;
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("ngram ") {
                let (n, count) = rest
                    .split_once('=')
                    .ok_or_else(|| bad("expected `ngram N=count`".into()))?;
                let n: usize = n.trim().parse().map_err(|_| bad("bad order".into()))?;
                let count: usize = count.trim().parse().map_err(|_| bad("bad count".into()))?;
                if n != declared.len() + 1 {
                    return Err(bad(format!("unexpected order {n}")));
                }
                declared.push(count);
                tables.push(HashMap::with_capacity(count));
                continue;
            }
            if let Some(n) = trimmed
                .strip_prefix('\\')
                .and_then(|s| s.strip_suffix("-grams:"))
            {
                let n: usize = n.parse().map_err(|_| bad("bad section header".into()))?;
                if n == 0 || n > tables.len() {
                    return Err(bad(format!("section for undeclared order {n}")));
                }
                section = Some(n);
                continue;
            }
            let n = section.ok_or_else(|| bad("n-gram entry outside a section".into()))?;
            let mut fields = trimmed.split('\t');
            let logp: f64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| bad("bad probability".into()))?;
            let words = fields.next().ok_or_else(|| bad("missing words".into()))?;
            let backoff: f64 = match fields.next() {
                Some(f) => f.trim().parse().map_err(|_| bad("bad back-off".into()))?,
                None => 0.0,
            };
            let gram = words
                .split(' ')
                .map(|w| {
                    if w == BOS_TOKEN {
                        Ok(BOS)
                    } else if vocab.contains(w) {
                        Ok(vocab.id(w))
                    } else {
                        Err(bad(format!("word `{w}` not in vocabulary")))
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            if gram.len() != n {
                return Err(bad(format!("expected {n} words, got {}", gram.len())));
            }
            tables[n - 1].insert(gram, (logp, backoff));
        }
        if tables.is_empty() {
            return Err(Error::Arpa {
                line: 0,
                reason: "no \\data\\ section".into(),
            });
        }
        for (n, (&want, table)) in declared.iter().zip(&tables).enumerate() {
            if want != table.len() {
                return Err(Error::Arpa {
                    line: 0,
                    reason: format!("order {}: declared {want} entries, read {}", n + 1, table.len()),
                });
            }
        }
        meta.config.order = tables.len();
        Ok(ArpaModel { meta, tables })
    }

    pub fn meta(&self) -> ArpaMeta {
        self.meta
    }

    pub fn order(&self) -> usize {
        self.tables.len()
    }

    fn log10_prob(&self, ctx: &[u32], w: u32) -> f64 {
        let n = ctx.len() + 1;
        let mut key = ctx.to_vec();
        key.push(w);
        if let Some(&(logp, _)) = self.tables[n - 1].get(&key) {
            return logp;
        }
        if ctx.is_empty() {
            return f64::NEG_INFINITY;
        }
        let bo = self.tables[n - 2].get(ctx).map_or(0.0, |&(_, bo)| bo);
        bo + self.log10_prob(&ctx[1..], w)
    }

    pub fn prob(&self, history: &[u32], next: u32) -> f64 {
        let need = self.order() - 1;
        let take = history.len().min(need);
        let mut ctx = vec![BOS; need - take];
        ctx.extend_from_slice(&history[history.len() - take..]);
        10f64.powf(self.log10_prob(&ctx, next))
    }

    pub fn window_logprobs(&self, window: &DialogWindow) -> Vec<f64> {
        window_logprobs(window, self.meta.config.cross_turn, |h, w| self.prob(h, w))
    }
}

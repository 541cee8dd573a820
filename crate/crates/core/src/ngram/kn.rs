use crate::corpus::{Dialog, DialogWindow, CorpusVocab, EncodedTurn, encode_turn};
use crate::error::{Error, Result};
use crate::ngram::{CountTrie, Discounts, BOS, MAX_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramConfig {
    pub order: usize,
    /// Let histories run across turn boundaries within a window.
    pub cross_turn: bool,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: MAX_ORDER,
            cross_turn: false,
        }
    }
}

/// Interpolated modified Kneser-Ney language model.
#[derive(Debug, Clone)]
pub struct KnModel {
    config: NgramConfig,
    vocab_size: usize,
    trie: CountTrie,
    // discounts[n - 1] for order n
    discounts: Vec<Discounts>,
}

/// Token streams for counting: one per turn, or one per dialog with
/// `cross_turn`.
pub fn training_streams(
    dialogs: &[Dialog],
    vocab: &CorpusVocab,
    max_turn_len: usize,
    cross_turn: bool,
) -> Vec<Vec<u32>> {
    let mut streams = Vec::new();
    for d in dialogs {
        let turns = d.turns.iter().map(|t| encode_turn(t, vocab, max_turn_len).tokens);
        if cross_turn {
            streams.push(turns.flatten().collect());
        } else {
            streams.extend(turns);
        }
    }
    streams
}

impl KnModel {
    pub fn train(streams: &[Vec<u32>], vocab_size: usize, config: NgramConfig) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&config.order) {
            return Err(Error::Config(format!(
                "n-gram order must be in 1..={MAX_ORDER}, got {}",
                config.order
            )));
        }
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        if let Some(&bad) = streams.iter().flatten().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::TargetOutOfRange {
                target: bad as usize,
                vocab: vocab_size,
            });
        }
        let trie = CountTrie::train(streams, config.order);
        let discounts = (1..=config.order)
            .map(|n| {
                Discounts::estimate([1, 2, 3, 4].map(|r| trie.count_of_counts(n, r)))
            })
            .collect();
        Ok(KnModel {
            config,
            vocab_size,
            trie,
            discounts,
        })
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn trie(&self) -> &CountTrie {
        &self.trie
    }

    pub fn discounts(&self, order: usize) -> Discounts {
        self.discounts[order - 1]
    }

    /// `P(next | history)`; only the last `order - 1` history tokens matter and
    /// shorter histories are padded with [`BOS`].
    pub fn prob(&self, history: &[u32], next: u32) -> f64 {
        let ctx = self.padded_context(history);
        self.prob_at(self.config.order, &ctx, next)
    }

    /// Interpolated probability at order `n`, using the last `n - 1` tokens of
    /// `ctx` (which must hold at least that many).
    pub fn prob_at(&self, n: usize, ctx: &[u32], next: u32) -> f64 {
        let uniform = 1.0 / self.vocab_size as f64;
        let mut p = uniform;
        for m in 1..=n {
            let c = &ctx[ctx.len() - (m - 1)..];
            if let Some(counts) = self.trie.context(c) {
                if counts.total > 0 {
                    let d = self.discounts[m - 1];
                    let total = counts.total as f64;
                    let count = counts.next.get(&next).copied().unwrap_or(0);
                    let discounted = (count as f64 - d.for_count(count)).max(0.0) / total;
                    let gamma = (d.d1 * counts.n1 as f64
                        + d.d2 * counts.n2 as f64
                        + d.d3plus * counts.n3plus as f64)
                        / total;
                    p = discounted + gamma * p;
                }
            }
        }
        p
    }

    /// Interpolation weight of `ctx` at order `ctx.len() + 1`, if the context
    /// was observed.
    pub fn backoff_weight(&self, ctx: &[u32]) -> Option<f64> {
        let counts = self.trie.context(ctx).filter(|c| c.total > 0)?;
        let d = self.discounts[ctx.len()];
        Some(
            (d.d1 * counts.n1 as f64 + d.d2 * counts.n2 as f64 + d.d3plus * counts.n3plus as f64)
                / counts.total as f64,
        )
    }

    fn padded_context(&self, history: &[u32]) -> Vec<u32> {
        let need = self.config.order - 1;
        let take = history.len().min(need);
        let mut ctx = vec![BOS; need - take];
        ctx.extend_from_slice(&history[history.len() - take..]);
        ctx
    }
}

/// Natural-log probabilities of each target-turn token of `window`.
pub(crate) fn window_logprobs(
    window: &DialogWindow,
    cross_turn: bool,
    prob: impl Fn(&[u32], u32) -> f64,
) -> Vec<f64> {
    let mut history: Vec<u32> = Vec::new();
    if cross_turn {
        history.extend(window.context.iter().flat_map(|t: &EncodedTurn| t.tokens.iter()));
    }
    let mut out = Vec::with_capacity(window.target.len());
    for &w in &window.target.tokens {
        out.push(prob(&history, w).ln());
        history.push(w);
    }
    out
}

impl KnModel {
    pub fn window_logprobs(&self, window: &DialogWindow) -> Vec<f64> {
        window_logprobs(window, self.config.cross_turn, |h, w| self.prob(h, w))
    }

    /// Last-turn perplexity over `windows`.
    pub fn perplexity(&self, windows: &[DialogWindow]) -> Result<f64> {
        let (mut nll, mut n) = (0.0, 0usize);
        for w in windows {
            for lp in self.window_logprobs(w) {
                nll -= lp;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty("no target tokens to score"));
        }
        Ok((nll / n as f64).exp())
    }
}

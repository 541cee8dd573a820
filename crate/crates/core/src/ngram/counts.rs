use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Pseudo-token used only to pad histories; never predicted.
pub const BOS: u32 = u32::MAX;
pub const MAX_ORDER: usize = 5;
/// Discount used when count-of-counts are too sparse to estimate one.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

/// Counts of the words following one context at one order.
#[derive(Debug, Clone, Default)]
pub struct ContextCounts {
    pub next: HashMap<u32, u64>,
    pub total: u64,
    /// Number of followers with count 1, 2 and >= 3.
    pub n1: u64,
    pub n2: u64,
    pub n3plus: u64,
}

/// N-gram counts for orders `1..=order`. The highest order holds raw counts;
/// lower orders hold continuation counts (number of distinct left
/// extensions).
#[derive(Debug, Clone)]
pub struct CountTrie {
    order: usize,
    // levels[n - 1]: context of length n - 1 -> followers
    levels: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

impl CountTrie {
    /// Counts every position of every stream, padding histories with `order - 1`
    /// [`BOS`] symbols.
    pub fn train(streams: &[Vec<u32>], order: usize) -> Self {
        assert!((1..=MAX_ORDER).contains(&order), "order must be in 1..={MAX_ORDER}");
        let mut levels: Vec<HashMap<Vec<u32>, ContextCounts>> = vec![HashMap::new(); order];
        let top = order - 1;
        for stream in streams {
            let mut padded = vec![BOS; top];
            padded.extend_from_slice(stream);
            for i in top..padded.len() {
                let ctx = padded[i - top..i].to_vec();
                *levels[top]
                    .entry(ctx)
                    .or_default()
                    .next
                    .entry(padded[i])
                    .or_default() += 1;
            }
        }
        // Continuation counts: each distinct (x, ctx, w) at order n + 1 adds one
        // to (ctx, w) at order n.
        for n in (1..order).rev() {
            let mut lower: HashMap<Vec<u32>, ContextCounts> = HashMap::new();
            for (ctx, counts) in &levels[n] {
                let short = ctx[1..].to_vec();
                let entry = lower.entry(short).or_default();
                for &w in counts.next.keys() {
                    *entry.next.entry(w).or_default() += 1;
                }
            }
            levels[n - 1] = lower;
        }
        for level in &mut levels {
            for counts in level.values_mut() {
                counts.total = counts.next.values().sum();
                for &c in counts.next.values() {
                    match c {
                        1 => counts.n1 += 1,
                        2 => counts.n2 += 1,
                        _ => counts.n3plus += 1,
                    }
                }
            }
        }
        CountTrie { order, levels }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Followers of `context` at order `context.len() + 1`.
    pub fn context(&self, context: &[u32]) -> Option<&ContextCounts> {
        self.levels.get(context.len())?.get(context)
    }

    /// Count of `word` after `context` (raw at the top order, continuation below).
    pub fn count(&self, context: &[u32], word: u32) -> u64 {
        self.context(context)
            .and_then(|c| c.next.get(&word).copied())
            .unwrap_or(0)
    }

    /// All contexts at order `n`.
    pub fn contexts(&self, n: usize) -> impl Iterator<Item = (&Vec<u32>, &ContextCounts)> {
        self.levels[n - 1].iter()
    }

    /// Number of n-grams at order `n` whose count equals `r`.
    pub fn count_of_counts(&self, n: usize, r: u64) -> u64 {
        self.levels[n - 1]
            .values()
            .flat_map(|c| c.next.values())
            .filter(|&&c| c == r)
            .count() as u64
    }
}

/// Modified Kneser-Ney discounts for one order, applied to counts 1, 2, >= 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3plus: f64,
}

impl Discounts {
    pub const FALLBACK: Discounts = Discounts {
        d1: FALLBACK_DISCOUNT,
        d2: FALLBACK_DISCOUNT,
        d3plus: FALLBACK_DISCOUNT,
    };

    /// Estimates from count-of-counts `n1..n4`:
    /// `Y = n1 / (n1 + 2 n2)`, `D_r = r - (r + 1) Y n_{r+1} / n_r`.
    /// Falls back to [`FALLBACK_DISCOUNT`] if any of `n1..n4` is zero or any
    /// estimate leaves the open interval `(0, r)`.
    pub fn estimate(n: [u64; 4]) -> Self {
        if n.contains(&0) {
            return Self::FALLBACK;
        }
        let [n1, n2, n3, n4] = n.map(|v| v as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = Discounts {
            d1: 1.0 - 2.0 * y * n2 / n1,
            d2: 2.0 - 3.0 * y * n3 / n2,
            d3plus: 3.0 - 4.0 * y * n4 / n3,
        };
        if !(d.d1 > 0.0 && d.d1 < 1.0 && d.d2 > 0.0 && d.d2 < 2.0 && d.d3plus > 0.0 && d.d3plus < 3.0) {
            return Self::FALLBACK;
        }
        d
    }

    pub fn for_count(&self, c: u64) -> f64 {
        match c {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3plus,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigram_raw_counts() {
        let trie = CountTrie::train(&[vec![10, 11, 10, 11]], 1);
        assert_eq!(trie.count(&[], 10), 2);
        assert_eq!(trie.count(&[], 11), 2);
        assert_eq!(trie.context(&[]).unwrap().total, 4);
    }

    #[test]
    fn continuation_count_tallies_distinct_left_contexts() {
        // `9` follows 1, 2, 3 and 1 again: three distinct left contexts.
        let stream = vec![1, 9, 2, 9, 3, 9, 1, 9, 4, 5];
        let trie = CountTrie::train(&[stream], 2);
        assert_eq!(trie.count(&[], 9), 3);
        assert_eq!(trie.count(&[1], 9), 2);
        // `1` is preceded only by the padding symbol and `9`.
        assert_eq!(trie.count(&[], 1), 2);
    }

    #[test]
    fn discount_estimation_and_fallback() {
        assert_eq!(Discounts::estimate([5, 0, 1, 1]), Discounts::FALLBACK);
        // D2 = 2 - 3 Y n3 / n2 < 0 here.
        assert_eq!(Discounts::estimate([10, 1, 5, 1]), Discounts::FALLBACK);
        let d = Discounts::estimate([10, 4, 2, 1]);
        let y = 10.0 / 18.0;
        assert!((d.d1 - (1.0 - 2.0 * y * 0.4)).abs() < 1e-15);
        assert!((d.d2 - (2.0 - 3.0 * y * 0.5)).abs() < 1e-15);
        assert!((d.d3plus - (3.0 - 4.0 * y * 0.5)).abs() < 1e-15);
        assert_eq!(d.for_count(0), 0.0);
    }
}

//! Synthetic two-speaker dialogs with a controllable cross-turn dependency.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialog, Speaker, Turn, Utterance};
use crate::error::{Error, Result};

const POS_TAGS: [&str; 6] = ["NN", "VB", "PRP", "IN", "RB", "UH"];
const DA_TAGS: [&str; 6] = [
    "Statement-non-opinion",
    "Acknowledge",
    "Statement-opinion",
    "Agree/Accept",
    "Appreciation",
    "Yes-No-Question",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependency {
    /// Turn k repeats turn k-2, the same speaker's previous turn.
    SelfEcho,
    /// Turn k repeats turn k-1, the other speaker's turn.
    CrossEcho,
    /// Every turn is drawn independently.
    None,
}

impl FromStr for Dependency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self-echo" => Ok(Dependency::SelfEcho),
            "cross-echo" => Ok(Dependency::CrossEcho),
            "none" => Ok(Dependency::None),
            other => Err(Error::Config(format!(
                "unknown dependency `{other}` (expected self-echo, cross-echo or none)"
            ))),
        }
    }
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dependency::SelfEcho => "self-echo",
            Dependency::CrossEcho => "cross-echo",
            Dependency::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dialog_count: usize,
    pub vocab_size: usize,
    pub turns_per_dialog: usize,
    pub dependency: Dependency,
    pub seed: u64,
    pub min_turn_len: usize,
    pub max_turn_len: usize,
    /// Probability that an echoed token is replaced by a fresh draw.
    pub copy_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dialog_count: 2000,
            vocab_size: 200,
            turns_per_dialog: 6,
            dependency: Dependency::SelfEcho,
            seed: 0,
            min_turn_len: 3,
            max_turn_len: 6,
            copy_noise: 0.0,
        }
    }
}

pub fn synthetic_token(id: usize) -> String {
    format!("w{id:03}")
}

fn pos_of(token_id: usize) -> &'static str {
    POS_TAGS[token_id % POS_TAGS.len()]
}

/// Generates a corpus. Dialog ids cycle through corpus folders so that
/// [`split_by_folder`](crate::corpus::split_by_folder) yields roughly 10/12
/// training, 1/12 validation and 1/12 test dialogs.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<Dialog>> {
    if cfg.vocab_size < 10 {
        return Err(Error::Config(format!(
            "synthetic vocab_size must be at least 10, got {}",
            cfg.vocab_size
        )));
    }
    if cfg.min_turn_len == 0 || cfg.min_turn_len > cfg.max_turn_len {
        return Err(Error::Config(format!(
            "invalid turn length range {}..={}",
            cfg.min_turn_len, cfg.max_turn_len
        )));
    }
    if cfg.turns_per_dialog == 0 {
        return Err(Error::Config("turns_per_dialog must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.copy_noise) {
        return Err(Error::Config(format!("copy_noise must lie in [0, 1], got {}", cfg.copy_noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dialogs = Vec::with_capacity(cfg.dialog_count);
    for n in 0..cfg.dialog_count {
        let folder = n % 12;
        let mut contents: Vec<Vec<usize>> = Vec::with_capacity(cfg.turns_per_dialog);
        let mut turns = Vec::with_capacity(cfg.turns_per_dialog);
        for k in 0..cfg.turns_per_dialog {
            let source = match cfg.dependency {
                Dependency::SelfEcho if k >= 2 => Some(k - 2),
                Dependency::CrossEcho if k >= 1 => Some(k - 1),
                _ => None,
            };
            let ids: Vec<usize> = match source {
                Some(s) => contents[s]
                    .iter()
                    .map(|&t| {
                        if cfg.copy_noise > 0.0 && rng.gen_bool(cfg.copy_noise) {
                            rng.gen_range(0..cfg.vocab_size)
                        } else {
                            t
                        }
                    })
                    .collect(),
                None => {
                    let len = rng.gen_range(cfg.min_turn_len..=cfg.max_turn_len);
                    (0..len).map(|_| rng.gen_range(0..cfg.vocab_size)).collect()
                }
            };
            let speaker = if k % 2 == 0 { Speaker::A } else { Speaker::B };
            turns.push(Turn {
                speaker,
                utterances: split_utterances(&ids, &mut rng),
            });
            contents.push(ids);
        }
        dialogs.push(Dialog {
            dialog_id: format!("sw{folder:02}_{n:06}"),
            turns,
        });
    }
    Ok(dialogs)
}

fn split_utterances(ids: &[usize], rng: &mut ChaCha8Rng) -> Vec<Utterance> {
    let cut = if ids.len() >= 2 && rng.gen_bool(0.3) {
        rng.gen_range(1..ids.len())
    } else {
        ids.len()
    };
    [&ids[..cut], &ids[cut..]]
        .into_iter()
        .filter(|part| !part.is_empty())
        .map(|part| Utterance {
            tokens: part.iter().map(|&t| synthetic_token(t)).collect(),
            pos_tags: part.iter().map(|&t| pos_of(t).to_string()).collect(),
            da_tag: DA_TAGS.choose(rng).unwrap().to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn tokens(turn: &Turn) -> Vec<&str> {
        turn.utterances
            .iter()
            .flat_map(|u| u.tokens.iter().map(String::as_str))
            .collect()
    }

    fn cfg(dependency: Dependency) -> SyntheticConfig {
        SyntheticConfig {
            dialog_count: 300,
            dependency,
            seed: 11,
            ..Default::default()
        }
    }

    /// Fraction of content tokens in turns k >= lag that equal the token at
    /// the same position `lag` turns earlier.
    fn copy_accuracy(dialogs: &[Dialog], lag: usize) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for d in dialogs {
            for k in lag..d.turns.len() {
                let (src, dst) = (tokens(&d.turns[k - lag]), tokens(&d.turns[k]));
                for (i, t) in dst.iter().enumerate() {
                    total += 1;
                    hit += usize::from(src.get(i) == Some(t));
                }
            }
        }
        hit as f64 / total as f64
    }

    #[test]
    fn self_echo_copy_oracle_is_accurate() {
        let d = generate_synthetic(&SyntheticConfig {
            copy_noise: 0.02,
            ..cfg(Dependency::SelfEcho)
        })
        .unwrap();
        assert!(copy_accuracy(&d, 2) >= 0.95);
        assert!(copy_accuracy(&d, 1) < 0.1);
    }

    #[test]
    fn cross_echo_copies_previous_turn() {
        let d = generate_synthetic(&cfg(Dependency::CrossEcho)).unwrap();
        assert!(copy_accuracy(&d, 1) >= 0.95);
    }

    #[test]
    fn independent_tokens_have_near_maximal_entropy() {
        let d = generate_synthetic(&SyntheticConfig {
            dialog_count: 3000,
            ..cfg(Dependency::None)
        })
        .unwrap();
        let mut counts: HashMap<&str, f64> = HashMap::new();
        let mut n = 0.0;
        for t in d.iter().flat_map(|d| &d.turns) {
            for tok in tokens(t) {
                *counts.entry(tok).or_default() += 1.0;
                n += 1.0;
            }
        }
        let entropy: f64 = counts.values().map(|c| -(c / n) * (c / n).ln()).sum();
        assert!((entropy - 200f64.ln()).abs() < 0.02, "entropy {entropy}");
        assert!(copy_accuracy(&d, 2) < 0.05);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = generate_synthetic(&cfg(Dependency::SelfEcho)).unwrap();
        let b = generate_synthetic(&cfg(Dependency::SelfEcho)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 12, ..cfg(Dependency::SelfEcho) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn speakers_alternate_and_ids_split() {
        let d = generate_synthetic(&cfg(Dependency::None)).unwrap();
        for dialog in &d {
            for pair in dialog.turns.windows(2) {
                assert_ne!(pair[0].speaker, pair[1].speaker);
            }
        }
        let splits = crate::corpus::split_by_folder(d).unwrap();
        assert_eq!(splits.train.len(), 250);
        assert_eq!(splits.valid.len(), 25);
        assert_eq!(splits.test.len(), 25);
    }

    #[test]
    fn small_vocab_is_rejected() {
        assert!(generate_synthetic(&SyntheticConfig { vocab_size: 9, ..Default::default() }).is_err());
    }
}

//! Modified Kneser-Ney n-gram baseline.

mod arpa;
mod counts;
mod kn;

pub use arpa::{write_arpa, ArpaMeta, ArpaModel, BOS_TOKEN};
pub use counts::{ContextCounts, CountTrie, Discounts, BOS, FALLBACK_DISCOUNT, MAX_ORDER};
pub use kn::{training_streams, KnModel, NgramConfig};

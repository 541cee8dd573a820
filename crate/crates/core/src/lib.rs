pub mod error;
pub mod eval;
pub mod corpus;
pub mod models;
pub mod train;
pub mod neural;
pub mod ngram;

pub use error::{Error, Result};

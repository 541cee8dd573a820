//! The seven dialog language model variants.

pub mod checkpoint;
mod config;
mod network;

pub use checkpoint::{load_model, read_model, save_model, write_model, ModelCheckpoint};
pub use config::{ModelConfig, ModelVariant};
pub use network::{
    build_params, expected_manifest, seeded_rng, ContextCarry, DialogModel, LossScope, Mode,
    NoRng, TokenRecord, WindowForward, DA_EMBEDDING, DA_RNN, EMBEDDING, EXTERNAL_RNN, LSTM,
    OUTPUT_BIAS, OUTPUT_WEIGHT,
};

//! Tensors, the gradient tape, LSTM/dropout layers and the optimizer.

pub mod checkpoint;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use layers::{
    dropout_mask, init_lstm, lstm_param_names, lstm_step, LstmCell, LstmState, LstmVars,
    EMBEDDING_INIT_BOUND, FORGET_BIAS_INIT, WEIGHT_INIT_BOUND,
};
pub use optim::{adam_step, clip_by_global_norm, AdamConfig, AdamState, ClipOutcome};
pub use params::{Gradients, ParameterSet};
pub use tape::{log_softmax, sigmoid, softmax, softmax_with_log_normalizer, Tape, TapeGradients, Var};
pub use tensor::Tensor;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_MAX_TURN_LEN;
use crate::error::{Error, Result};
use crate::models::{LossScope, ModelConfig};
use crate::neural::AdamConfig;

/// Training hyperparameters and model widths.
///
/// Loaded from a flat `key = value` file; see [`TrainConfig::KEYS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub keep_prob: f64,
    pub clip_norm: f64,
    pub l2_lambda: f64,
    pub adam: AdamConfig,
    pub k: usize,
    pub max_turn_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub external_state_dim: usize,
    pub da_embed_dim: usize,
    pub loss_scope: LossScope,
    /// Worker threads for per-window gradients. Results are bit-identical
    /// for a fixed thread count.
    pub threads: usize,
    /// Include wall-clock seconds in the training log, which makes the log
    /// differ between otherwise identical runs.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 15,
            patience: 5,
            seed: 1,
            keep_prob: 0.8,
            clip_norm: 5.0,
            l2_lambda: 1e-4,
            adam: AdamConfig::default(),
            k: 3,
            max_turn_len: DEFAULT_MAX_TURN_LEN,
            embed_dim: 64,
            hidden_dim: 64,
            external_state_dim: 64,
            da_embed_dim: 16,
            loss_scope: LossScope::TargetTurn,
            threads: 1,
            log_wall_time: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 21] = [
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
        "keep_prob",
        "clip_norm",
        "l2_lambda",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "k",
        "max_turn_len",
        "embed_dim",
        "hidden_dim",
        "external_state_dim",
        "da_embed_dim",
        "loss_scope",
        "threads",
        "log_wall_time",
        "dims",
    ];

    /// Sets one key. `dims` sets all four widths at once.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "keep_prob" => self.keep_prob = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "l2_lambda" => self.l2_lambda = parse(key, value)?,
            "learning_rate" => self.adam.alpha = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "epsilon" => self.adam.epsilon = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "max_turn_len" => self.max_turn_len = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "external_state_dim" => self.external_state_dim = parse(key, value)?,
            "da_embed_dim" => self.da_embed_dim = parse(key, value)?,
            "dims" => {
                let d: usize = parse(key, value)?;
                self.embed_dim = d;
                self.hidden_dim = d;
                self.external_state_dim = d;
                self.da_embed_dim = d;
            }
            "loss_scope" => {
                self.loss_scope = match value {
                    "target-turn" => LossScope::TargetTurn,
                    "all-turns" => LossScope::AllTurns,
                    _ => return Err(Error::Config(format!("invalid value `{value}` for `loss_scope`"))),
                }
            }
            "threads" => self.threads = parse(key, value)?,
            "log_wall_time" => self.log_wall_time = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("k", self.k),
            ("max_turn_len", self.max_turn_len),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.adam.alpha > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.model_config(2, 2).validate()
    }

    pub fn model_config(&self, vocab_size: usize, da_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            external_state_dim: self.external_state_dim,
            da_vocab_size,
            da_embed_dim: self.da_embed_dim,
            keep_prob: self.keep_prob,
            l2_lambda: self.l2_lambda,
            k: self.k,
        }
    }
}

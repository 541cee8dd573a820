use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Context wiring of a dialog language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// No context; every turn starts from a zero state.
    SingleTurn,
    /// Mean embedding of all context tokens, fed at every step.
    BoWContext,
    /// Turns concatenated: each turn starts from the previous turn's final state.
    Drnnlm,
    /// Final hidden state of turn k-1, fed at every step of turn k.
    Ccdclm,
    /// Turn k starts from turn k-2's final state; turn k-1's final hidden
    /// state is fed at every step.
    Idclm,
    /// As IDCLM, but the per-step context is an external recurrent state
    /// updated with each context turn's final hidden state.
    Esidclm,
    /// A recurrent encoding of the context turns' dialog-act tags, fed at every step.
    Daclm,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::SingleTurn,
        ModelVariant::BoWContext,
        ModelVariant::Drnnlm,
        ModelVariant::Ccdclm,
        ModelVariant::Idclm,
        ModelVariant::Esidclm,
        ModelVariant::Daclm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::SingleTurn => "SingleTurn",
            ModelVariant::BoWContext => "BoWContext",
            ModelVariant::Drnnlm => "DRNNLM",
            ModelVariant::Ccdclm => "CCDCLM",
            ModelVariant::Idclm => "IDCLM",
            ModelVariant::Esidclm => "ESIDCLM",
            ModelVariant::Daclm => "DACLM",
        }
    }

    /// Row label used in perplexity tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelVariant::SingleTurn => "Single-Turn-RNNLM",
            ModelVariant::BoWContext => "BoW-Context-RNNLM",
            other => other.name(),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Width of the per-step context vector, 0 when none is fed.
    pub fn context_dim(self, cfg: &ModelConfig) -> usize {
        match self {
            ModelVariant::SingleTurn | ModelVariant::Drnnlm => 0,
            ModelVariant::BoWContext => cfg.embed_dim,
            ModelVariant::Ccdclm | ModelVariant::Idclm => cfg.hidden_dim,
            ModelVariant::Esidclm | ModelVariant::Daclm => cfg.external_state_dim,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    /// Case-insensitive match on the seven variant names.
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the external state (ESIDCLM) and of the dialog-act RNN (DACLM).
    pub external_state_dim: usize,
    pub da_vocab_size: usize,
    pub da_embed_dim: usize,
    pub keep_prob: f64,
    pub l2_lambda: f64,
    /// Turns per window, the target included.
    pub k: usize,
}

impl ModelConfig {
    /// A configuration with equal embedding, hidden and external widths.
    pub fn with_dims(vocab_size: usize, da_vocab_size: usize, dim: usize, k: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: dim,
            hidden_dim: dim,
            external_state_dim: dim,
            da_vocab_size,
            da_embed_dim: dim,
            keep_prob: 1.0,
            l2_lambda: 0.0,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("external_state_dim", self.external_state_dim),
            ("da_vocab_size", self.da_vocab_size),
            ("da_embed_dim", self.da_embed_dim),
            ("k", self.k),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep_prob must lie in (0, 1], got {}", self.keep_prob)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!("l2_lambda must be non-negative, got {}", self.l2_lambda)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_case_insensitively() {
        for v in ModelVariant::ALL {
            assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(v.name().to_lowercase().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(ModelVariant::from_code(v.code()), Some(v));
        }
        assert!("rnnlm".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::with_dims(10, 5, 4, 3);
        assert!(c.validate().is_ok());
        c.keep_prob = 0.0;
        assert!(c.validate().is_err());
        c.keep_prob = 0.8;
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }
}

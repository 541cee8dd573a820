//! Model checkpoints: the weights plus the variant, configuration and
//! vocabulary fingerprint, stored as extra `meta.*` tensors in the same
//! binary container as plain parameter sets.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{DialogModel, ModelConfig, ModelVariant};
use crate::neural::checkpoint::{read_params, write_params};
use crate::neural::Tensor;

const META_VARIANT: &str = "meta.variant";
const META_CONFIG: &str = "meta.config";
const META_FINGERPRINT: &str = "meta.vocab_fingerprint";

/// A model together with the fingerprint of the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: DialogModel,
    pub vocab_fingerprint: Option<u64>,
}

pub fn write_model<W: Write>(model: &DialogModel, vocab_fingerprint: Option<u64>, out: W) -> Result<()> {
    let mut set = model.params().clone();
    set.insert(META_VARIANT, Tensor::scalar(f64::from(model.variant().code())))?;
    let c = model.config();
    set.insert(
        META_CONFIG,
        Tensor::vector(vec![
            c.vocab_size as f64,
            c.embed_dim as f64,
            c.hidden_dim as f64,
            c.external_state_dim as f64,
            c.da_vocab_size as f64,
            c.da_embed_dim as f64,
            c.keep_prob,
            c.l2_lambda,
            c.k as f64,
        ]),
    )?;
    if let Some(fp) = vocab_fingerprint {
        // 16-bit chunks are exact in an f64.
        let chunks = (0..4).map(|i| ((fp >> (16 * i)) & 0xffff) as f64).collect();
        set.insert(META_FINGERPRINT, Tensor::vector(chunks))?;
    }
    write_params(&set, out)
}

pub fn read_model<R: Read>(input: R) -> Result<ModelCheckpoint> {
    let mut set = read_params(input)?;
    let variant = set
        .remove(META_VARIANT)
        .ok_or_else(|| Error::Checkpoint("not a model checkpoint: missing variant".into()))?;
    let code = variant.values()[0];
    let variant = ModelVariant::from_code(code as u8)
        .filter(|_| code.fract() == 0.0 && (0.0..=255.0).contains(&code))
        .ok_or_else(|| Error::Checkpoint(format!("unknown variant code {code}")))?;
    let config = set
        .remove(META_CONFIG)
        .ok_or_else(|| Error::Checkpoint("not a model checkpoint: missing configuration".into()))?;
    let v = config.values();
    if v.len() != 9 {
        return Err(Error::Checkpoint(format!("configuration has {} fields, expected 9", v.len())));
    }
    let dim = |x: f64| -> Result<usize> {
        if x.fract() == 0.0 && (0.0..1e15).contains(&x) {
            Ok(x as usize)
        } else {
            Err(Error::Checkpoint(format!("invalid dimension {x}")))
        }
    };
    let config = ModelConfig {
        vocab_size: dim(v[0])?,
        embed_dim: dim(v[1])?,
        hidden_dim: dim(v[2])?,
        external_state_dim: dim(v[3])?,
        da_vocab_size: dim(v[4])?,
        da_embed_dim: dim(v[5])?,
        keep_prob: v[6],
        l2_lambda: v[7],
        k: dim(v[8])?,
    };
    let vocab_fingerprint = match set.remove(META_FINGERPRINT) {
        Some(t) if t.len() == 4 => {
            let mut fp = 0u64;
            for (i, &x) in t.values().iter().enumerate() {
                if x.fract() != 0.0 || !(0.0..65536.0).contains(&x) {
                    return Err(Error::Checkpoint("corrupt vocabulary fingerprint".into()));
                }
                fp |= (x as u64) << (16 * i);
            }
            Some(fp)
        }
        Some(_) => return Err(Error::Checkpoint("corrupt vocabulary fingerprint".into())),
        None => None,
    };
    let model = DialogModel::from_parts(variant, config, set)?;
    Ok(ModelCheckpoint { model, vocab_fingerprint })
}

pub fn save_model(path: &Path, model: &DialogModel, vocab_fingerprint: Option<u64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_model(model, vocab_fingerprint, std::io::BufWriter::new(file))
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_model(std::io::BufReader::new(file))
}

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DialogWindow;
use crate::error::{Error, Result};
use crate::models::{DialogModel, Mode, ModelVariant};
use crate::neural::{adam_step, clip_by_global_norm, AdamState};
use crate::train::{batch_objective, TrainConfig};

/// One epoch of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective (data loss plus penalty) over the epoch.
    pub train_loss: f64,
    pub valid_perplexity: f64,
    pub steps: usize,
    /// Batches whose gradient norm exceeded the clipping threshold.
    pub clip_count: usize,
    pub best: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// Epoch with the lowest validation perplexity; the earliest on ties.
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.valid_perplexity <= r.valid_perplexity => Some(b),
            _ => Some(r),
        })
    }

    /// One JSON object per epoch, newline-terminated.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainLog { records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub objective: f64,
    pub data_loss: f64,
    pub tokens: usize,
    pub grad_norm: f64,
    pub clipped: bool,
}

/// One optimizer update on `batch`: objective, backward, clip, Adam.
///
/// Dropout seeds for the batch's windows are drawn from `rng`.
pub fn train_step<R: RngCore>(
    model: &mut DialogModel,
    adam: &mut AdamState,
    batch: &[&DialogWindow],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepStats> {
    let seeds: Vec<u64> = batch.iter().map(|_| rng.next_u64()).collect();
    let mut obj = batch_objective(model, batch, &seeds, Mode::Train, cfg.loss_scope, cfg.threads)?;
    let objective = obj.total();
    let clip = clip_by_global_norm(&mut obj.grads, cfg.clip_norm)?;
    let after = obj.grads.global_norm();
    assert!(
        !after.is_finite() || after <= cfg.clip_norm + 1e-9,
        "clipped gradient norm {after} exceeds {}",
        cfg.clip_norm
    );
    if objective.is_finite() && clip.norm_before.is_finite() {
        adam_step(model.params_mut(), &obj.grads, adam)?;
    }
    Ok(StepStats {
        objective,
        data_loss: obj.data_loss,
        tokens: obj.tokens,
        grad_norm: clip.norm_before,
        clipped: clip.clipped,
    })
}

/// Eval-mode perplexity over target turns:
/// `exp(total negative log-likelihood / total target tokens)`.
pub fn evaluate_validation(model: &DialogModel, windows: &[DialogWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for w in windows {
        let fwd = model.forward_eval(w)?;
        nll += fwd.token_losses.iter().sum::<f64>();
        tokens += fwd.token_losses.len();
    }
    Ok((nll / tokens as f64).exp())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation perplexity.
    pub model: DialogModel,
    pub log: TrainLog,
}

/// Trains `variant` from a fresh initialization seeded by `cfg.seed`.
///
/// `on_epoch` sees every record as soon as its epoch ends.
pub fn train(
    variant: ModelVariant,
    cfg: &TrainConfig,
    vocab_size: usize,
    da_vocab_size: usize,
    train_windows: &[DialogWindow],
    valid_windows: &[DialogWindow],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_windows.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if valid_windows.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model_cfg = cfg.model_config(vocab_size, da_vocab_size);
    let mut model = DialogModel::new(variant, model_cfg, &mut rng)?;
    let mut adam = AdamState::new(model.params(), cfg.adam);
    let mut best = model.clone();
    let mut log = TrainLog::default();
    let mut best_ppl = f64::INFINITY;
    let mut since_best = 0;
    let started = Instant::now();
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut global_step = 0usize;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        let mut clip_count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&DialogWindow> = chunk.iter().map(|&i| &train_windows[i]).collect();
            global_step += 1;
            let stats = pool.install(|| train_step(&mut model, &mut adam, &batch, cfg, &mut rng))?;
            if !stats.objective.is_finite() || !stats.grad_norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: global_step,
                    loss: stats.objective,
                });
            }
            loss_sum += stats.objective;
            steps += 1;
            clip_count += usize::from(stats.clipped);
        }
        let valid_perplexity = pool.install(|| evaluate_validation(&model, valid_windows))?;
        if !valid_perplexity.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step: global_step,
                loss: valid_perplexity.ln(),
            });
        }
        let improved = valid_perplexity < best_ppl;
        if improved {
            best_ppl = valid_perplexity;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            valid_perplexity,
            steps,
            clip_count,
            best: improved,
            wall_time_s: cfg.log_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "{variant} epoch {epoch}: train loss {:.4}, valid ppl {:.3}",
            record.train_loss,
            valid_perplexity
        );
        on_epoch(&record);
        log.records.push(record);
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome { model: best, log })
}

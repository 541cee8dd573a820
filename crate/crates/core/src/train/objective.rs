use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::DialogWindow;
use crate::error::Result;
use crate::models::{DialogModel, LossScope, Mode, OUTPUT_BIAS, OUTPUT_WEIGHT};
use crate::neural::{Gradients, ParameterSet, Tape};

/// Value and gradient of the training objective on one batch:
/// mean window loss plus `l2_lambda * (|W_o|^2 + |b_o|^2)`.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    /// Mean negative log-likelihood per window.
    pub data_loss: f64,
    pub penalty: f64,
    /// Target-turn tokens in the batch.
    pub tokens: usize,
    pub grads: Gradients,
}

impl BatchObjective {
    pub fn total(&self) -> f64 {
        self.data_loss + self.penalty
    }
}

/// Output-layer L2 penalty, with its gradient added to `grads`.
fn add_penalty(params: &ParameterSet, lambda: f64, grads: &mut Gradients) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut tape = Tape::with_params(params);
    let mut terms = Vec::with_capacity(2);
    for name in [OUTPUT_WEIGHT, OUTPUT_BIAS] {
        let p = tape.param(name)?;
        let sq = tape.mul(p, p)?;
        terms.push(tape.sum(sq));
    }
    let both = tape.concat(&terms)?;
    let sum = tape.sum(both);
    let penalty = tape.scale(sum, lambda);
    let value = tape.value(penalty).item();
    tape.backward_into(penalty, grads)?;
    Ok(value)
}

fn window_pass(
    model: &DialogModel,
    window: &DialogWindow,
    mode: Mode,
    scope: LossScope,
    seed: u64,
    weight: f64,
    grads: &mut Gradients,
) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::with_params(model.params());
    let fwd = model.forward(&mut tape, window, mode, scope, &mut rng)?;
    let loss = tape.value(fwd.loss).item();
    let tokens = fwd.token_losses.len();
    let scaled = tape.scale(fwd.loss, weight);
    tape.backward_into(scaled, grads)?;
    Ok((loss, tokens))
}

/// Computes the batch objective. Window `i` draws its dropout masks from a
/// generator seeded with `seeds[i]`.
///
/// With `threads > 1` windows are split into that many contiguous chunks
/// whose gradients are summed in chunk order, so results depend on the
/// thread count but not on scheduling.
pub fn batch_objective(
    model: &DialogModel,
    windows: &[&DialogWindow],
    seeds: &[u64],
    mode: Mode,
    scope: LossScope,
    threads: usize,
) -> Result<BatchObjective> {
    assert_eq!(windows.len(), seeds.len(), "one seed per window");
    let weight = 1.0 / windows.len().max(1) as f64;
    let run_chunk = |range: std::ops::Range<usize>| -> Result<(f64, usize, Gradients)> {
        let mut grads = model.params().zeros_like();
        let mut loss = 0.0;
        let mut tokens = 0;
        for i in range {
            let (l, t) = window_pass(model, windows[i], mode, scope, seeds[i], weight, &mut grads)?;
            loss += l;
            tokens += t;
        }
        Ok((loss, tokens, grads))
    };
    let (loss_sum, tokens, mut grads) = if threads <= 1 || windows.len() < 2 {
        run_chunk(0..windows.len())?
    } else {
        let n = windows.len();
        let chunks = threads.min(n);
        let ranges: Vec<_> = (0..chunks)
            .map(|c| (c * n / chunks)..((c + 1) * n / chunks))
            .collect();
        let parts: Vec<Result<(f64, usize, Gradients)>> =
            ranges.into_par_iter().map(run_chunk).collect();
        let mut parts = parts.into_iter();
        let mut acc = parts.next().expect("at least one chunk")?;
        for part in parts {
            let (l, t, g) = part?;
            acc.0 += l;
            acc.1 += t;
            acc.2.add_scaled(&g, 1.0)?;
        }
        acc
    };
    let penalty = add_penalty(model.params(), model.config().l2_lambda, &mut grads)?;
    Ok(BatchObjective {
        data_loss: loss_sum * weight,
        penalty,
        tokens,
        grads,
    })
}

/// Objective value only, in eval mode.
pub fn objective_value(model: &DialogModel, windows: &[&DialogWindow], scope: LossScope) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        let mut tape = Tape::with_params(model.params());
        let fwd = model.forward(&mut tape, w, Mode::Eval, scope, &mut crate::models::NoRng)?;
        total += tape.value(fwd.loss).item();
    }
    let mean = total / windows.len().max(1) as f64;
    let lambda = model.config().l2_lambda;
    let penalty = if lambda == 0.0 {
        0.0
    } else {
        let p = model.params();
        lambda * (p.require(OUTPUT_WEIGHT)?.sum_squares() + p.require(OUTPUT_BIAS)?.sum_squares())
    };
    Ok(mean + penalty)
}

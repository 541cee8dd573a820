//! Central finite-difference check of the full training objective.

use rand::Rng;

use crate::corpus::{DialogWindow, EncodedTurn, Speaker, EOT_ID, TAG_SENTINEL_ID};
use crate::error::Result;
use crate::models::{DialogModel, LossScope, Mode, ModelConfig, ModelVariant};
use crate::train::{batch_objective, objective_value};

pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Gradients smaller than this in magnitude are compared absolutely: the
/// finite-difference estimate itself carries error of roughly this size.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Element with the largest relative error.
    pub worst: Option<GradCheckEntry>,
    pub checked: usize,
}

/// Compares analytic gradients of the eval-mode objective on `windows`
/// against central differences for every parameter element.
pub fn check_gradients(
    model: &DialogModel,
    windows: &[&DialogWindow],
    epsilon: f64,
    scope: LossScope,
) -> Result<GradCheckReport> {
    let seeds = vec![0; windows.len()];
    let analytic = batch_objective(model, windows, &seeds, Mode::Eval, scope, 1)?.grads;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for p in 0..model.params().len() {
        let name = model.params().name_at(p).to_string();
        for i in 0..model.params().at(p).len() {
            let original = model.params().at(p).values()[i];
            probe.params_mut().at_mut(p).values_mut()[i] = original + epsilon;
            let plus = objective_value(&probe, windows, scope)?;
            probe.params_mut().at_mut(p).values_mut()[i] = original - epsilon;
            let minus = objective_value(&probe, windows, scope)?;
            probe.params_mut().at_mut(p).values_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.at(p).values()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some(GradCheckEntry {
                    parameter: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    relative_error: err,
                });
            }
        }
    }
    Ok(report)
}

/// Random turn of 1..=max_tokens content tokens plus `<eot>`, split into
/// one or two utterances.
pub fn random_turn<R: Rng + ?Sized>(
    rng: &mut R,
    speaker: Speaker,
    max_tokens: usize,
    vocab_size: usize,
    pos_size: usize,
    da_size: usize,
) -> EncodedTurn {
    let n = rng.gen_range(1..=max_tokens.max(1));
    let split = if n > 1 && rng.gen_bool(0.5) { rng.gen_range(1..n) } else { n };
    let das: Vec<u32> = if split < n {
        vec![rng.gen_range(1..da_size as u32), rng.gen_range(1..da_size as u32)]
    } else {
        vec![rng.gen_range(1..da_size as u32)]
    };
    let mut turn = EncodedTurn {
        speaker,
        tokens: Vec::with_capacity(n + 1),
        pos: Vec::with_capacity(n + 1),
        da: Vec::with_capacity(n + 1),
        utterance_das: das.clone(),
        utterance_lens: if split < n { vec![split, n - split] } else { vec![n] },
    };
    for i in 0..n {
        turn.tokens.push(rng.gen_range(0..vocab_size as u32));
        turn.pos.push(rng.gen_range(1..pos_size as u32));
        turn.da.push(if i < split { das[0] } else { das[das.len() - 1] });
    }
    turn.tokens.push(EOT_ID);
    turn.pos.push(TAG_SENTINEL_ID);
    turn.da.push(TAG_SENTINEL_ID);
    turn
}

/// Random window of `k` alternating-speaker turns.
pub fn random_window<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    max_tokens: usize,
    cfg: &ModelConfig,
) -> DialogWindow {
    let mut speaker = Speaker::A;
    let mut turns = Vec::with_capacity(k);
    for _ in 0..k {
        turns.push(random_turn(rng, speaker, max_tokens, cfg.vocab_size, 6, cfg.da_vocab_size));
        speaker = speaker.other();
    }
    let target = turns.pop().expect("k >= 1");
    DialogWindow {
        dialog_id: "sw00_toy".to_string(),
        context: turns,
        target,
    }
}

/// A toy model with random (not freshly initialized) weights and a few
/// random windows, for gradient checking.
pub fn toy_problem<R: Rng + ?Sized>(
    variant: ModelVariant,
    cfg: ModelConfig,
    windows: usize,
    max_tokens: usize,
    rng: &mut R,
) -> Result<(DialogModel, Vec<DialogWindow>)> {
    let mut model = DialogModel::new(variant, cfg, rng)?;
    // Spread weights beyond the small init range so every gate sees
    // non-trivial curvature.
    for (_, t) in model.params_mut().iter_mut() {
        for v in t.values_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let ws = (0..windows).map(|_| random_window(rng, cfg.k, max_tokens, &cfg)).collect();
    Ok((model, ws))
}

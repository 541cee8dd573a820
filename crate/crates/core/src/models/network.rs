use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DialogWindow, EncodedTurn, EOT_ID};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelVariant};
use crate::neural::{
    dropout_mask, init_lstm, lstm_param_names, LstmCell, LstmState, LstmVars, ParameterSet,
    Tape, Tensor, Var, EMBEDDING_INIT_BOUND, WEIGHT_INIT_BOUND,
};

pub const EMBEDDING: &str = "embedding";
pub const OUTPUT_WEIGHT: &str = "output.weight";
pub const OUTPUT_BIAS: &str = "output.bias";
pub const LSTM: &str = "lstm";
pub const EXTERNAL_RNN: &str = "external";
pub const DA_EMBEDDING: &str = "da_embedding";
pub const DA_RNN: &str = "da_rnn";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Which turns of a window contribute to the loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScope {
    /// Only the last turn.
    #[default]
    TargetTurn,
    /// Every turn, each scored against the turns before it inside the window.
    AllTurns,
}

/// State handed from the context turns to the target turn.
/// `None` means the quantity is unused by the variant or the turn is absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextCarry {
    /// Final state of turn k-1.
    pub prev_turn_last_state: Option<LstmState>,
    /// Final state of turn k-2.
    pub prev_prev_turn_last_state: Option<LstmState>,
    /// External RNN output (ESIDCLM) or dialog-act RNN output (DACLM).
    pub external_state: Option<Tensor>,
}

/// Result of one window's forward pass.
#[derive(Debug)]
pub struct WindowForward {
    /// Summed negative log-likelihood, a `[1]` node.
    pub loss: Var,
    /// Per-token losses of the target turn, `<eot>` last.
    pub token_losses: Vec<f64>,
    /// Cross-entropy nodes of the target turn, one per token.
    pub token_nodes: Vec<Var>,
    pub carry: ContextCarry,
    /// Initial recurrent state of the target turn.
    pub target_init: LstmState,
    /// Per-step context vector of the target turn.
    pub target_context: Option<Tensor>,
}

/// Score of one target-turn token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: u32,
    pub pos: u32,
    pub da: u32,
    /// Natural log probability.
    pub logprob: f64,
}

/// Parameter names and shapes a variant needs.
pub fn expected_manifest(
    variant: ModelVariant,
    cfg: &ModelConfig,
) -> BTreeMap<String, Vec<usize>> {
    let mut m = BTreeMap::new();
    let lstm = |m: &mut BTreeMap<String, Vec<usize>>, prefix: &str, input: usize, hidden: usize| {
        let [b, wi, wr] = lstm_param_names(prefix);
        m.insert(b, vec![4 * hidden]);
        m.insert(wi, vec![4 * hidden, input]);
        m.insert(wr, vec![4 * hidden, hidden]);
    };
    m.insert(EMBEDDING.to_string(), vec![cfg.vocab_size, cfg.embed_dim]);
    m.insert(OUTPUT_WEIGHT.to_string(), vec![cfg.vocab_size, cfg.hidden_dim]);
    m.insert(OUTPUT_BIAS.to_string(), vec![cfg.vocab_size]);
    lstm(&mut m, LSTM, cfg.embed_dim + variant.context_dim(cfg), cfg.hidden_dim);
    match variant {
        ModelVariant::Esidclm => lstm(&mut m, EXTERNAL_RNN, cfg.hidden_dim, cfg.external_state_dim),
        ModelVariant::Daclm => {
            m.insert(DA_EMBEDDING.to_string(), vec![cfg.da_vocab_size, cfg.da_embed_dim]);
            lstm(&mut m, DA_RNN, cfg.da_embed_dim, cfg.external_state_dim);
        }
        _ => {}
    }
    m
}

/// Freshly initialized parameters for `variant`.
///
/// Groups are drawn from `rng` in sorted-name order, so equal seeds give
/// equal values.
pub fn build_params<R: Rng + ?Sized>(
    variant: ModelVariant,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut p = ParameterSet::new();
    if variant == ModelVariant::Daclm {
        p.insert(
            DA_EMBEDDING,
            Tensor::uniform(&[cfg.da_vocab_size, cfg.da_embed_dim], EMBEDDING_INIT_BOUND, rng),
        )?;
        init_lstm(&mut p, DA_RNN, cfg.da_embed_dim, cfg.external_state_dim, rng)?;
    }
    p.insert(
        EMBEDDING,
        Tensor::uniform(&[cfg.vocab_size, cfg.embed_dim], EMBEDDING_INIT_BOUND, rng),
    )?;
    if variant == ModelVariant::Esidclm {
        init_lstm(&mut p, EXTERNAL_RNN, cfg.hidden_dim, cfg.external_state_dim, rng)?;
    }
    init_lstm(&mut p, LSTM, cfg.embed_dim + variant.context_dim(cfg), cfg.hidden_dim, rng)?;
    p.insert(OUTPUT_BIAS, Tensor::zeros(&[cfg.vocab_size]))?;
    p.insert(
        OUTPUT_WEIGHT,
        Tensor::uniform(&[cfg.vocab_size, cfg.hidden_dim], WEIGHT_INIT_BOUND, rng),
    )?;
    Ok(p)
}

/// A dialog language model: wiring, dimensions and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogModel {
    variant: ModelVariant,
    config: ModelConfig,
    params: ParameterSet,
}

struct Net {
    embedding: Var,
    lstm: LstmCell,
    out_w: Var,
    out_b: Var,
    external: Option<LstmCell>,
    da_embedding: Option<Var>,
    da_rnn: Option<LstmCell>,
}

struct Dropout<'r> {
    keep_prob: f64,
    training: bool,
    rng: &'r mut dyn RngCore,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        if !self.training || self.keep_prob == 1.0 {
            return Ok(x);
        }
        let mask = dropout_mask(tape.shape(x), self.keep_prob, true, &mut *self.rng)?;
        let mask = tape.constant(mask);
        tape.mul(x, mask)
    }
}

struct TurnRun {
    last: LstmVars,
    losses: Vec<Var>,
}

struct TargetSetup {
    init: LstmVars,
    context: Option<Var>,
    carry: ContextCarry,
}

impl DialogModel {
    pub fn new<R: Rng + ?Sized>(variant: ModelVariant, config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = build_params(variant, &config, rng)?;
        Ok(DialogModel { variant, config, params })
    }

    /// Wraps existing weights, checking them against the variant's manifest.
    pub fn from_parts(variant: ModelVariant, config: ModelConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        let expected = expected_manifest(variant, &config);
        let found = params.manifest();
        if expected != found {
            return Err(Error::Mismatch(format!(
                "{variant} parameters do not match the configuration: expected {expected:?}, found {found:?}"
            )));
        }
        Ok(DialogModel { variant, config, params })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    /// Records the forward pass of `window` on `tape`, which must borrow
    /// parameters laid out like this model's.
    ///
    /// In [`Mode::Train`] dropout masks are drawn from `rng`; in
    /// [`Mode::Eval`] `rng` is untouched.
    pub fn forward<R: RngCore>(
        &self,
        tape: &mut Tape<'_>,
        window: &DialogWindow,
        mode: Mode,
        scope: LossScope,
        rng: &mut R,
    ) -> Result<WindowForward> {
        if window.context.len() + 1 != self.config.k {
            return Err(Error::Mismatch(format!(
                "window has {} turns but the model was configured for K={}",
                window.context.len() + 1,
                self.config.k
            )));
        }
        let net = self.bind(tape)?;
        let mut dropout = Dropout {
            keep_prob: self.config.keep_prob,
            training: mode == Mode::Train,
            rng,
        };
        let mut extra_losses = Vec::new();
        if scope == LossScope::AllTurns {
            for j in 0..window.context.len() {
                let setup = self.context_setup(tape, &net, &window.context[..j], &mut dropout)?;
                let run = self.run_turn(tape, &net, &window.context[j], setup.init, setup.context, true, &mut dropout)?;
                extra_losses.extend(run.losses);
            }
        }
        let setup = self.context_setup(tape, &net, &window.context, &mut dropout)?;
        let target_init = setup.init.read(tape);
        let target_context = setup.context.map(|c| tape.value(c).clone());
        let run = self.run_turn(tape, &net, &window.target, setup.init, setup.context, true, &mut dropout)?;
        let token_losses = run.losses.iter().map(|&v| tape.value(v).item()).collect();
        let token_nodes = run.losses.clone();
        let mut all = extra_losses;
        all.extend(run.losses);
        let stacked = tape.concat(&all)?;
        let loss = tape.sum(stacked);
        Ok(WindowForward {
            loss,
            token_losses,
            token_nodes,
            carry: setup.carry,
            target_init,
            target_context,
        })
    }

    /// Eval-mode forward pass on a private tape.
    pub fn forward_eval(&self, window: &DialogWindow) -> Result<WindowForward> {
        let mut tape = Tape::with_params(&self.params);
        self.forward(&mut tape, window, Mode::Eval, LossScope::TargetTurn, &mut NoRng)
    }

    /// Negative log-likelihood of the target turn in eval mode.
    pub fn window_loss(&self, window: &DialogWindow) -> Result<f64> {
        let mut tape = Tape::with_params(&self.params);
        let fwd = self.forward(&mut tape, window, Mode::Eval, LossScope::TargetTurn, &mut NoRng)?;
        Ok(tape.value(fwd.loss).item())
    }

    /// One record per target-turn token, `<eot>` included.
    pub fn score_turn(&self, window: &DialogWindow) -> Result<Vec<TokenRecord>> {
        let fwd = self.forward_eval(window)?;
        let t = &window.target;
        Ok(fwd
            .token_losses
            .iter()
            .enumerate()
            .map(|(i, &loss)| TokenRecord {
                token: t.tokens[i],
                pos: t.pos[i],
                da: t.da[i],
                logprob: -loss,
            })
            .collect())
    }

    /// Full next-token distributions at every target-turn position.
    pub fn target_distributions(&self, window: &DialogWindow) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::with_params(&self.params);
        let fwd = self.forward(&mut tape, window, Mode::Eval, LossScope::TargetTurn, &mut NoRng)?;
        Ok(fwd
            .token_nodes
            .iter()
            .map(|&v| tape.probs(v).expect("cross-entropy node").to_vec())
            .collect())
    }

    fn bind(&self, tape: &mut Tape<'_>) -> Result<Net> {
        let embedding = tape.param(EMBEDDING)?;
        let lstm = LstmCell::bind(tape, LSTM)?;
        let out_w = tape.param(OUTPUT_WEIGHT)?;
        let out_b = tape.param(OUTPUT_BIAS)?;
        let external = match self.variant {
            ModelVariant::Esidclm => Some(LstmCell::bind(tape, EXTERNAL_RNN)?),
            _ => None,
        };
        let (da_embedding, da_rnn) = match self.variant {
            ModelVariant::Daclm => (Some(tape.param(DA_EMBEDDING)?), Some(LstmCell::bind(tape, DA_RNN)?)),
            _ => (None, None),
        };
        let want = self.config.embed_dim + self.variant.context_dim(&self.config);
        if lstm.in_dim() != want || lstm.hidden_dim() != self.config.hidden_dim {
            return Err(Error::Mismatch(format!(
                "{} expects an LSTM of input {want} and width {}, found {} and {}",
                self.variant,
                self.config.hidden_dim,
                lstm.in_dim(),
                lstm.hidden_dim()
            )));
        }
        Ok(Net {
            embedding,
            lstm,
            out_w,
            out_b,
            external,
            da_embedding,
            da_rnn,
        })
    }

    /// Runs the context turns and derives the target's initial state and
    /// per-step context. `context` may be shorter than K-1; missing turns
    /// count as absent and contribute zeros.
    fn context_setup(
        &self,
        tape: &mut Tape<'_>,
        net: &Net,
        context: &[EncodedTurn],
        dropout: &mut Dropout<'_>,
    ) -> Result<TargetSetup> {
        let h = self.config.hidden_dim;
        let n = context.len();
        let mut carry = ContextCarry::default();
        let (init, c) = match self.variant {
            ModelVariant::SingleTurn => (LstmVars::zeros(tape, h), None),
            ModelVariant::BoWContext => {
                let mut total: Option<Var> = None;
                let mut count = 0usize;
                for turn in context {
                    for &tok in &turn.tokens {
                        let e = tape.row(net.embedding, tok as usize)?;
                        total = Some(match total {
                            Some(acc) => tape.add(acc, e)?,
                            None => e,
                        });
                        count += 1;
                    }
                }
                let c = match total {
                    Some(sum) => tape.scale(sum, 1.0 / count as f64),
                    None => tape.constant(Tensor::zeros(&[self.config.embed_dim])),
                };
                (LstmVars::zeros(tape, h), Some(c))
            }
            ModelVariant::Drnnlm => {
                let mut state = LstmVars::zeros(tape, h);
                for turn in context {
                    state = self.run_turn(tape, net, turn, state, None, false, dropout)?.last;
                }
                if n > 0 {
                    carry.prev_turn_last_state = Some(state.read(tape));
                }
                (state, None)
            }
            ModelVariant::Ccdclm => {
                let mut prev: Option<LstmVars> = None;
                for turn in context {
                    let c = match prev {
                        Some(p) => p.hidden,
                        None => tape.constant(Tensor::zeros(&[h])),
                    };
                    let init = LstmVars::zeros(tape, h);
                    prev = Some(self.run_turn(tape, net, turn, init, Some(c), false, dropout)?.last);
                }
                carry.prev_turn_last_state = prev.map(|p| p.read(tape));
                let c = match prev {
                    Some(p) => p.hidden,
                    None => tape.constant(Tensor::zeros(&[h])),
                };
                (LstmVars::zeros(tape, h), Some(c))
            }
            ModelVariant::Idclm | ModelVariant::Esidclm => {
                let external = self.variant == ModelVariant::Esidclm;
                let s_dim = self.config.external_state_dim;
                let mut es = external.then(|| LstmVars::zeros(tape, s_dim));
                let mut lasts: Vec<LstmVars> = Vec::with_capacity(n);
                for (j, turn) in context.iter().enumerate() {
                    let init = match j.checked_sub(2) {
                        Some(i) => lasts[i],
                        None => LstmVars::zeros(tape, h),
                    };
                    // IDCLM context turns take no per-step context, so turn k-2
                    // reaches the target only through its initial state.
                    let c = match es {
                        Some(s) => s.hidden,
                        None => tape.constant(Tensor::zeros(&[h])),
                    };
                    let last = self.run_turn(tape, net, turn, init, Some(c), false, dropout)?.last;
                    if let (Some(s), Some(cell)) = (es, net.external) {
                        es = Some(cell.step(tape, s, last.hidden)?);
                    }
                    lasts.push(last);
                }
                let init = match n.checked_sub(2) {
                    Some(i) => lasts[i],
                    None => LstmVars::zeros(tape, h),
                };
                let c = match (es, n.checked_sub(1)) {
                    (Some(s), _) => s.hidden,
                    (None, Some(i)) => lasts[i].hidden,
                    (None, None) => tape.constant(Tensor::zeros(&[h])),
                };
                carry.prev_turn_last_state = n.checked_sub(1).map(|i| lasts[i].read(tape));
                carry.prev_prev_turn_last_state = n.checked_sub(2).map(|i| lasts[i].read(tape));
                carry.external_state = es.map(|s| tape.value(s.hidden).clone());
                (init, Some(c))
            }
            ModelVariant::Daclm => {
                let (emb, cell) = match (net.da_embedding, net.da_rnn) {
                    (Some(e), Some(c)) => (e, c),
                    _ => return Err(Error::Mismatch("DACLM without dialog-act weights".into())),
                };
                let mut state = LstmVars::zeros(tape, self.config.external_state_dim);
                for turn in context {
                    if turn.utterance_das.is_empty() {
                        return Err(Error::Mismatch("DACLM context turn without dialog-act tags".into()));
                    }
                    for &da in &turn.utterance_das {
                        let x = tape.row(emb, da as usize)?;
                        state = cell.step(tape, state, x)?;
                    }
                }
                carry.external_state = Some(tape.value(state.hidden).clone());
                (LstmVars::zeros(tape, h), Some(state.hidden))
            }
        };
        Ok(TargetSetup { init, context: c, carry })
    }

    /// Runs one turn from `init`. Inputs are `<eot>, w_1 .. w_T`, so with
    /// `predict` the step outputs score `w_1 .. w_T, <eot>`.
    #[allow(clippy::too_many_arguments)]
    fn run_turn(
        &self,
        tape: &mut Tape<'_>,
        net: &Net,
        turn: &EncodedTurn,
        init: LstmVars,
        context: Option<Var>,
        predict: bool,
        dropout: &mut Dropout<'_>,
    ) -> Result<TurnRun> {
        if turn.tokens.is_empty() {
            return Err(Error::Empty("turn"));
        }
        let mut state = init;
        let mut losses = Vec::with_capacity(if predict { turn.tokens.len() } else { 0 });
        let mut prev = EOT_ID;
        for &target in &turn.tokens {
            let emb = tape.row(net.embedding, prev as usize)?;
            let x = match context {
                Some(c) => tape.concat(&[emb, c])?,
                None => emb,
            };
            let x = dropout.apply(tape, x)?;
            state = net.lstm.step(tape, state, x)?;
            if predict {
                let hidden = dropout.apply(tape, state.hidden)?;
                let logits = tape.matmul(net.out_w, hidden)?;
                let logits = tape.add(logits, net.out_b)?;
                losses.push(tape.softmax_cross_entropy(logits, target as usize)?);
            }
            prev = target;
        }
        Ok(TurnRun { last: state, losses })
    }
}

/// Placeholder generator for eval-mode passes, which draw no randomness.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRng;

impl RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode draws no random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode draws no random numbers")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("eval mode draws no random numbers")
    }
    fn try_fill_bytes(&mut self, _dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval mode draws no random numbers")
    }
}

/// Seeded generator used for initialization and dropout.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

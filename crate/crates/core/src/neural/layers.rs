use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{ParameterSet, Tape, Tensor, Var};

/// Bound of the uniform initializer for recurrent and affine weights.
pub const WEIGHT_INIT_BOUND: f64 = 0.08;
/// Bound of the uniform initializer for embedding tables.
pub const EMBEDDING_INIT_BOUND: f64 = 0.1;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Numeric LSTM state, outside any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            hidden: Tensor::zeros(&[hidden_dim]),
            cell: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.len()
    }
}

/// LSTM state recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmVars {
    pub fn constant(tape: &mut Tape<'_>, state: &LstmState) -> Self {
        LstmVars {
            hidden: tape.constant(state.hidden.clone()),
            cell: tape.constant(state.cell.clone()),
        }
    }

    pub fn zeros(tape: &mut Tape<'_>, hidden_dim: usize) -> Self {
        Self::constant(tape, &LstmState::zeros(hidden_dim))
    }

    pub fn read(&self, tape: &Tape<'_>) -> LstmState {
        LstmState {
            hidden: tape.value(self.hidden).clone(),
            cell: tape.value(self.cell).clone(),
        }
    }
}

/// Parameter names of an LSTM layer under `prefix`.
pub fn lstm_param_names(prefix: &str) -> [String; 3] {
    [
        format!("{prefix}.bias"),
        format!("{prefix}.w_in"),
        format!("{prefix}.w_rec"),
    ]
}

/// Registers freshly initialized LSTM weights under `prefix`.
///
/// Gate rows are laid out as input, forget, candidate, output.
pub fn init_lstm<R: Rng + ?Sized>(
    params: &mut ParameterSet,
    prefix: &str,
    in_dim: usize,
    hidden_dim: usize,
    rng: &mut R,
) -> Result<()> {
    let [bias_name, w_in_name, w_rec_name] = lstm_param_names(prefix);
    let mut bias = Tensor::zeros(&[4 * hidden_dim]);
    bias.values_mut()[hidden_dim..2 * hidden_dim].fill(FORGET_BIAS_INIT);
    // Names are drawn in sorted order so initial values depend only on
    // (prefix, dims, seed).
    params.insert(bias_name, bias)?;
    params.insert(
        w_in_name,
        Tensor::uniform(&[4 * hidden_dim, in_dim], WEIGHT_INIT_BOUND, rng),
    )?;
    params.insert(
        w_rec_name,
        Tensor::uniform(&[4 * hidden_dim, hidden_dim], WEIGHT_INIT_BOUND, rng),
    )?;
    Ok(())
}

/// LSTM weights bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    w_in: Var,
    w_rec: Var,
    bias: Var,
    in_dim: usize,
    hidden_dim: usize,
}

impl LstmCell {
    pub fn bind(tape: &mut Tape<'_>, prefix: &str) -> Result<Self> {
        let [bias_name, w_in_name, w_rec_name] = lstm_param_names(prefix);
        let bias = tape.param(&bias_name)?;
        let w_in = tape.param(&w_in_name)?;
        let w_rec = tape.param(&w_rec_name)?;
        let bias_shape = tape.shape(bias).to_vec();
        if bias_shape.len() != 1 || bias_shape[0] % 4 != 0 {
            return Err(Error::shape("lstm bias", &bias_shape, &[]));
        }
        let hidden_dim = bias_shape[0] / 4;
        let ws = tape.shape(w_in);
        if ws.len() != 2 || ws[0] != 4 * hidden_dim {
            return Err(Error::shape("lstm w_in", ws, &bias_shape));
        }
        let in_dim = ws[1];
        let rs = tape.shape(w_rec);
        if rs != [4 * hidden_dim, hidden_dim] {
            return Err(Error::shape("lstm w_rec", rs, &[4 * hidden_dim, hidden_dim]));
        }
        Ok(LstmCell {
            w_in,
            w_rec,
            bias,
            in_dim,
            hidden_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// One forget-gate LSTM step without peepholes:
    ///
    /// ```text
    /// z  = W_in x + W_rec h + b
    /// c' = σ(z_f) ⊙ c + σ(z_i) ⊙ tanh(z_g)
    /// h' = σ(z_o) ⊙ tanh(c')
    /// ```
    pub fn step(&self, tape: &mut Tape<'_>, state: LstmVars, input: Var) -> Result<LstmVars> {
        let h = self.hidden_dim;
        if tape.shape(input) != [self.in_dim] {
            return Err(Error::shape("lstm input", tape.shape(input), &[self.in_dim]));
        }
        if tape.shape(state.hidden) != [h] || tape.shape(state.cell) != [h] {
            return Err(Error::shape("lstm state", tape.shape(state.hidden), &[h]));
        }
        let from_input = tape.matmul(self.w_in, input)?;
        let from_state = tape.matmul(self.w_rec, state.hidden)?;
        let z = tape.add(from_input, from_state)?;
        let z = tape.add(z, self.bias)?;
        let zi = tape.slice(z, 0, h)?;
        let zf = tape.slice(z, h, h)?;
        let zg = tape.slice(z, 2 * h, h)?;
        let zo = tape.slice(z, 3 * h, h)?;
        let input_gate = tape.sigmoid(zi);
        let forget_gate = tape.sigmoid(zf);
        let candidate = tape.tanh(zg);
        let output_gate = tape.sigmoid(zo);
        let kept = tape.mul(forget_gate, state.cell)?;
        let written = tape.mul(input_gate, candidate)?;
        let cell = tape.add(kept, written)?;
        let squashed = tape.tanh(cell);
        let hidden = tape.mul(output_gate, squashed)?;
        Ok(LstmVars { hidden, cell })
    }
}

/// Eager LSTM step using the weights stored under `prefix`.
///
/// The input state is left untouched; a new state is returned.
pub fn lstm_step(
    state: &LstmState,
    input: &Tensor,
    params: &ParameterSet,
    prefix: &str,
) -> Result<LstmState> {
    let mut tape = Tape::with_params(params);
    let cell = LstmCell::bind(&mut tape, prefix)?;
    let vars = LstmVars::constant(&mut tape, state);
    let x = tape.constant(input.clone());
    let next = cell.step(&mut tape, vars, x)?;
    Ok(next.read(&tape))
}

/// Inverted-dropout mask: entries are `1/keep_prob` with probability
/// `keep_prob`, else 0. Outside training the mask is all ones.
pub fn dropout_mask<R: Rng + ?Sized>(
    shape: &[usize],
    keep_prob: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!(
            "keep_prob must lie in (0, 1], got {keep_prob}"
        )));
    }
    if !training || keep_prob == 1.0 {
        return Ok(Tensor::ones(shape));
    }
    let n: usize = shape.iter().product();
    let scale = 1.0 / keep_prob;
    let values = (0..n)
        .map(|_| if rng.gen::<f64>() < keep_prob { scale } else { 0.0 })
        .collect();
    Tensor::new(shape.to_vec(), values)
}

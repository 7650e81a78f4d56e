use std::fmt;
use std::str::FromStr;

use crate::rng::SplitMix64;
use crate::tensor::{ParamId, ParamStore, Result, Tape, Tensor, TensorError, Var};

/// How the saved block-entry state is merged with the block-exit state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaKind {
    /// `tanh(W [h_begin; h_prev] + b)`.
    Fc,
    /// Elementwise maximum.
    MaxPool,
    /// One extra LSTM step with input `h_prev` from state `h_begin`.
    Summarization,
}

impl AlphaKind {
    pub const ALL: [AlphaKind; 3] = [AlphaKind::Fc, AlphaKind::MaxPool, AlphaKind::Summarization];

    pub fn as_str(self) -> &'static str {
        match self {
            AlphaKind::Fc => "fc",
            AlphaKind::MaxPool => "maxpool",
            AlphaKind::Summarization => "summarization",
        }
    }
}

impl fmt::Display for AlphaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlphaKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(AlphaKind::Fc),
            "maxpool" | "max-pool" | "max_pool" => Ok(AlphaKind::MaxPool),
            "summarization" | "summary" => Ok(AlphaKind::Summarization),
            _ => Err(format!("unknown alpha {s:?} (expected fc, maxpool or summarization)")),
        }
    }
}

/// Gate order used for every per-gate array: forget, input, output, cell.
pub const GATES: [&str; 4] = ["f", "i", "o", "c"];

/// Parameters of one LSTM layer plus its block combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    /// FC combiner weight `(hidden x 2 hidden)` and bias, present iff the
    /// model uses [`AlphaKind::Fc`].
    pub alpha_fc: Option<(ParamId, ParamId)>,
}

impl LstmLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        alpha: Option<AlphaKind>,
        rng: &mut SplitMix64,
    ) -> Self {
        let mut mk = |name: String, shape: &[usize]| store.add(name, Tensor::glorot(shape, rng));
        let w = GATES.map(|g| mk(format!("{prefix}.W_{g}"), &[hidden_size, input_size]));
        let u = GATES.map(|g| mk(format!("{prefix}.U_{g}"), &[hidden_size, hidden_size]));
        let b = GATES.map(|g| mk(format!("{prefix}.b_{g}"), &[hidden_size]));
        let alpha_fc = (alpha == Some(AlphaKind::Fc)).then(|| {
            (
                mk(format!("{prefix}.alpha.W"), &[hidden_size, 2 * hidden_size]),
                mk(format!("{prefix}.alpha.b"), &[hidden_size]),
            )
        });
        Self {
            input_size,
            hidden_size,
            w,
            u,
            b,
            alpha_fc,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundLayer {
        let mut p = |id| tape.param(store, id);
        BoundLayer {
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            w: self.w.map(&mut p),
            u: self.u.map(&mut p),
            b: self.b.map(&mut p),
            alpha_fc: self.alpha_fc.map(|(w, b)| (p(w), p(b))),
        }
    }
}

/// An [`LstmLayer`] whose parameters are bound on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
    pub alpha_fc: Option<(Var, Var)>,
}

fn expect_len(tape: &Tape, v: Var, n: usize, what: &str) -> Result<()> {
    let shape = tape.value(v).shape();
    if shape != [n] {
        return Err(TensorError::Contract(format!(
            "{what}: expected a vector of {n}, got {shape:?}"
        )));
    }
    Ok(())
}

/// One gated update:
///
/// ```text
/// f = σ(W_f x + U_f h + b_f)    i = σ(W_i x + U_i h + b_i)
/// o = σ(W_o x + U_o h + b_o)    c' = f ⊙ c + i ⊙ tanh(W_c x + U_c h + b_c)
/// h' = o ⊙ tanh(c')
/// ```
///
/// `h_context` is whatever the caller decided the previous hidden state is.
pub fn lstm_step(tape: &mut Tape, layer: &BoundLayer, x: Var, h_context: Var, c_prev: Var) -> Result<(Var, Var)> {
    expect_len(tape, x, layer.input_size, "lstm input")?;
    expect_len(tape, h_context, layer.hidden_size, "lstm hidden state")?;
    expect_len(tape, c_prev, layer.hidden_size, "lstm cell state")?;
    let mut pre = [x; 4];
    for (g, p) in pre.iter_mut().enumerate() {
        let wx = tape.matmul(layer.w[g], x)?;
        let uh = tape.matmul(layer.u[g], h_context)?;
        *p = tape.add_n(&[wx, uh, layer.b[g]])?;
    }
    let f = tape.sigmoid(pre[0])?;
    let i = tape.sigmoid(pre[1])?;
    let o = tape.sigmoid(pre[2])?;
    let cand = tape.tanh(pre[3])?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, cand)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Combines the state saved at a block's opening with the state reached at
/// its end. Returns the context hidden state and the cell state the
/// following step should start from (changed only by summarization).
pub fn alpha_combine(
    tape: &mut Tape,
    alpha: AlphaKind,
    layer: &BoundLayer,
    h_begin: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    expect_len(tape, h_begin, layer.hidden_size, "alpha h_begin")?;
    expect_len(tape, h_prev, layer.hidden_size, "alpha h_prev")?;
    match alpha {
        AlphaKind::Fc => {
            let (w, b) = layer
                .alpha_fc
                .ok_or_else(|| TensorError::Contract("fc alpha without fc parameters".into()))?;
            let cat = tape.concat(&[h_begin, h_prev])?;
            let proj = tape.matmul(w, cat)?;
            let pre = tape.add(proj, b)?;
            Ok((tape.tanh(pre)?, c_prev))
        }
        AlphaKind::MaxPool => Ok((tape.max(h_begin, h_prev)?, c_prev)),
        AlphaKind::Summarization => {
            if layer.input_size != layer.hidden_size {
                return Err(TensorError::Contract(format!(
                    "summarization alpha feeds h as layer input: input size {} != hidden size {}",
                    layer.input_size, layer.hidden_size
                )));
            }
            lstm_step(tape, layer, h_prev, h_begin, c_prev)
        }
    }
}

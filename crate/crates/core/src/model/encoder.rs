use std::fmt;
use std::str::FromStr;

use super::lstm::{alpha_combine, lstm_step, AlphaKind, BoundLayer, LstmLayer};
use super::stack::StackState;
use super::ModelError;
use crate::ast::TokenKind;
use crate::rng::SplitMix64;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Policy for bracket sequences that do not balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StackMode {
    /// A close with an empty stack, or a push left open at the end, is an error.
    Strict,
    /// Such events are logged and the step proceeds as a plain LSTM step.
    Lenient,
}

impl fmt::Display for StackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackMode::Strict => "strict",
            StackMode::Lenient => "lenient",
        })
    }
}

impl FromStr for StackMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(StackMode::Strict),
            "lenient" => Ok(StackMode::Lenient),
            _ => Err(format!("unknown mode {s:?} (expected strict or lenient)")),
        }
    }
}

/// One recurrence step with the stack rule:
///
/// * open: push `h_prev`, then step from `h_prev`;
/// * close: pop `h_begin`, step from `alpha(h_begin, h_prev)`;
/// * anything else: step from `h_prev`.
#[allow(clippy::too_many_arguments)]
pub fn stacked_step(
    tape: &mut Tape,
    layer: &BoundLayer,
    alpha: AlphaKind,
    kind: TokenKind,
    t: usize,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    stack: &mut StackState,
    mode: StackMode,
) -> Result<(Var, Var), ModelError> {
    let (h_context, c_in) = match kind {
        TokenKind::Open => {
            stack.push(t, h_prev);
            (h_prev, c_prev)
        }
        TokenKind::Close => match stack.pop(t) {
            Some(h_begin) => alpha_combine(tape, alpha, layer, h_begin, h_prev, c_prev)?,
            None if mode == StackMode::Strict => {
                return Err(ModelError::Structure {
                    position: t,
                    message: "close bracket with an empty stack".into(),
                })
            }
            None => {
                stack.note_unmatched_close(t);
                (h_prev, c_prev)
            }
        },
        _ => (h_prev, c_prev),
    };
    Ok(lstm_step(tape, layer, x, h_context, c_in)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub alpha: AlphaKind,
    /// `false` runs a vanilla LSTM: brackets become ordinary tokens.
    pub use_stack: bool,
}

/// Embedding table plus a stack of recurrent layers, each with its own
/// hidden-state stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub embedding: ParamId,
    pub layers: Vec<LstmLayer>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// `h[t]` and `c[t]` are the states after consuming position `t`.
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    pub stack: StackState,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub layers: Vec<LayerTrace>,
    pub kinds: Vec<TokenKind>,
    /// Zero state every layer starts from; what a push at position 0 saves.
    pub initial_h: Var,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn top(&self) -> &LayerTrace {
        self.layers.last().expect("at least one layer")
    }

    pub fn last_hidden(&self) -> Option<Var> {
        self.top().h.last().copied()
    }

    /// Top-layer state before position `t` (`initial_h` for `t == 0`).
    pub fn hidden_before(&self, layer: usize, t: usize) -> Var {
        if t == 0 {
            self.initial_h
        } else {
            self.layers[layer].h[t - 1]
        }
    }
}

impl Encoder {
    pub fn new(store: &mut ParamStore, prefix: &str, config: EncoderConfig, rng: &mut SplitMix64) -> Self {
        let embedding = store.add(
            format!("{prefix}.embedding"),
            Tensor::glorot(&[config.vocab_size, config.embedding_size], rng),
        );
        let alpha = config.use_stack.then_some(config.alpha);
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 {
                    config.embedding_size
                } else {
                    config.hidden_size
                };
                LstmLayer::new(
                    store,
                    &format!("{prefix}.layer{l}"),
                    input,
                    config.hidden_size,
                    alpha,
                    rng,
                )
            })
            .collect();
        Self {
            config,
            embedding,
            layers,
        }
    }

    /// Runs every position up to the first PAD. `h_0 = c_0 = 0` in every
    /// layer; layer `l > 0` reads layer `l - 1`'s hidden state as input.
    pub fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[u32],
        kinds: &[TokenKind],
        mode: StackMode,
    ) -> Result<RunTrace, ModelError> {
        if ids.len() != kinds.len() {
            return Err(ModelError::Contract(format!(
                "{} ids but {} kind tags",
                ids.len(),
                kinds.len()
            )));
        }
        let len = kinds.iter().position(|k| *k == TokenKind::Pad).unwrap_or(kinds.len());
        if let Some(bad) = kinds[len..].iter().position(|k| *k != TokenKind::Pad) {
            return Err(ModelError::Contract(format!(
                "padding before a real token at position {}",
                len + bad
            )));
        }
        let hidden = self.config.hidden_size;
        let zero = tape.constant(Tensor::zeros(&[hidden]));
        let table = tape.param(store, self.embedding);
        let bound: Vec<BoundLayer> = self.layers.iter().map(|l| l.bind(tape, store)).collect();
        let mut traces: Vec<LayerTrace> = bound
            .iter()
            .map(|_| LayerTrace {
                h: Vec::with_capacity(len),
                c: Vec::with_capacity(len),
                stack: StackState::new(),
            })
            .collect();
        for t in 0..len {
            let kind = if self.config.use_stack {
                kinds[t]
            } else {
                TokenKind::NonTerminal
            };
            let mut x = tape.row(table, ids[t] as usize)?;
            for (layer, trace) in bound.iter().zip(traces.iter_mut()) {
                let h_prev = trace.h.last().copied().unwrap_or(zero);
                let c_prev = trace.c.last().copied().unwrap_or(zero);
                let (h, c) = stacked_step(
                    tape,
                    layer,
                    self.config.alpha,
                    kind,
                    t,
                    x,
                    h_prev,
                    c_prev,
                    &mut trace.stack,
                    mode,
                )?;
                trace.h.push(h);
                trace.c.push(c);
                x = h;
            }
        }
        for trace in &mut traces {
            if trace.stack.depth() > 0 {
                if mode == StackMode::Strict {
                    return Err(ModelError::Structure {
                        position: len,
                        message: format!("{} block(s) still open at end of sequence", trace.stack.depth()),
                    });
                }
                trace.stack.note_unclosed();
            }
        }
        Ok(RunTrace {
            layers: traces,
            kinds: kinds[..len].to_vec(),
            initial_h: zero,
        })
    }
}

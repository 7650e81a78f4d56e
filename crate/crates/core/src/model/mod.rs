//! An LSTM encoder whose hidden state is stacked at block boundaries.
//!
//! Every layer keeps a stack of hidden states. Opening a block pushes the
//! state reached just before it; closing the block pops that state and
//! merges it with the state at the block's end through an [`AlphaKind`]
//! combiner before the gated update. Only `h` is stacked; the cell state
//! flows straight through block boundaries.

mod encoder;
mod lstm;
mod stack;

pub use encoder::{stacked_step, Encoder, EncoderConfig, LayerTrace, RunTrace, StackMode};
pub use lstm::{alpha_combine, lstm_step, AlphaKind, BoundLayer, LstmLayer, GATES};
pub use stack::{StackEvent, StackState};

use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("structure error at position {position}: {message}")]
    Structure { position: usize, message: String },
    #[error("contract violated: {0}")]
    Contract(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{TokenKind, TokenKind::*};
    use crate::rng::SplitMix64;
    use crate::tensor::{ParamStore, Tape, Tensor};

    fn encoder(alpha: AlphaKind, use_stack: bool, layers: usize) -> (ParamStore, Encoder) {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(17);
        let enc = Encoder::new(
            &mut store,
            "enc",
            EncoderConfig {
                vocab_size: 10,
                embedding_size: 5,
                hidden_size: 5,
                layers,
                alpha,
                use_stack,
            },
            &mut rng,
        );
        (store, enc)
    }

    fn kinds_of(pattern: &str) -> (Vec<u32>, Vec<TokenKind>) {
        pattern
            .split_whitespace()
            .map(|w| match w {
                "<" => (2, Open),
                ">" => (3, Close),
                "_" => (0, Pad),
                w => (4 + (w.as_bytes()[0] - b'A') as u32 % 6, NonTerminal),
            })
            .unzip()
    }

    #[test]
    fn bracket_free_input_is_a_plain_lstm() {
        for alpha in AlphaKind::ALL {
            let (store, enc) = encoder(alpha, true, 2);
            let (ids, kinds) = kinds_of("A B C D E F A B");
            let mut tape = Tape::new();
            let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
            // Straight loop over the gate update.
            let mut t2 = Tape::new();
            let table = t2.param(&store, enc.embedding);
            let layers: Vec<_> = enc.layers.iter().map(|l| l.bind(&mut t2, &store)).collect();
            let zero = t2.constant(Tensor::zeros(&[5]));
            let mut state = [(zero, zero); 2];
            for (t, &id) in ids.iter().enumerate() {
                let mut x = t2.row(table, id as usize).unwrap();
                for (l, layer) in layers.iter().enumerate() {
                    let (h, c) = lstm_step(&mut t2, layer, x, state[l].0, state[l].1).unwrap();
                    state[l] = (h, c);
                    x = h;
                    assert_eq!(tape.data(trace.layers[l].h[t]), t2.data(h));
                    assert_eq!(tape.data(trace.layers[l].c[t]), t2.data(c));
                }
            }
            assert!(trace.layers.iter().all(|l| l.stack.log().is_empty()));
        }
    }

    #[test]
    fn push_and_pop_positions() {
        let (store, enc) = encoder(AlphaKind::MaxPool, true, 1);
        let (ids, kinds) = kinds_of("A < B C > D");
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
        let st = &trace.layers[0].stack;
        assert_eq!(
            st.log(),
            [StackEvent::Push { t: 1 }, StackEvent::Pop { t: 4, pushed_at: 1 }]
        );
        assert_eq!(st.depth(), 0);
    }

    #[test]
    fn nested_pops_are_lifo() {
        let (store, enc) = encoder(AlphaKind::Fc, true, 2);
        let (ids, kinds) = kinds_of("A < B < C > D >");
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
        for layer in &trace.layers {
            assert_eq!(
                layer.stack.log(),
                [
                    StackEvent::Push { t: 1 },
                    StackEvent::Push { t: 3 },
                    StackEvent::Pop { t: 5, pushed_at: 3 },
                    StackEvent::Pop { t: 7, pushed_at: 1 },
                ]
            );
        }
    }

    #[test]
    fn all_padding_gives_an_empty_trace() {
        let (store, enc) = encoder(AlphaKind::MaxPool, true, 2);
        let (ids, kinds) = kinds_of("_ _ _");
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
        assert!(trace.is_empty());
        assert!(trace.layers.iter().all(|l| l.h.is_empty()));
    }

    #[test]
    fn padding_must_be_a_tail() {
        let (store, enc) = encoder(AlphaKind::MaxPool, true, 1);
        let (ids, kinds) = kinds_of("A _ B");
        let mut tape = Tape::new();
        assert!(matches!(
            enc.run(&mut tape, &store, &ids, &kinds, StackMode::Lenient),
            Err(ModelError::Contract(_))
        ));
    }

    #[test]
    fn strict_and_lenient_on_unbalanced_input() {
        let (store, enc) = encoder(AlphaKind::Summarization, true, 2);
        let (ids, kinds) = kinds_of("A < B < C >");
        let mut tape = Tape::new();
        let r = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict);
        assert!(matches!(r, Err(ModelError::Structure { position: 6, .. })));
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Lenient).unwrap();
        assert_eq!(trace.len(), 6);
        let warnings: Vec<_> = trace.layers[0].stack.warnings().copied().collect();
        assert_eq!(warnings, [StackEvent::Unclosed { pushed_at: 1 }]);

        let (ids, kinds) = kinds_of("A > B");
        let r = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict);
        assert!(matches!(r, Err(ModelError::Structure { position: 1, .. })));
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Lenient).unwrap();
        assert_eq!(trace.layers[1].stack.log(), [StackEvent::UnmatchedClose { t: 1 }]);
    }

    #[test]
    fn vanilla_flag_ignores_brackets() {
        let (store, enc) = encoder(AlphaKind::MaxPool, false, 1);
        let (ids, kinds) = kinds_of("A < B > > >");
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
        assert!(trace.layers[0].stack.log().is_empty());
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let run = || {
            let (store, enc) = encoder(AlphaKind::Fc, true, 2);
            let (ids, kinds) = kinds_of("A < B < C > D > E");
            let mut tape = Tape::new();
            let tr = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
            tr.top()
                .h
                .iter()
                .flat_map(|&h| tape.data(h).to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn close_reaches_the_state_before_the_block() {
        for alpha in AlphaKind::ALL {
            let (store, enc) = encoder(alpha, true, 1);
            let (ids, kinds) = kinds_of("A < B C D E F B C D E F >");
            let mut tape = Tape::new();
            let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
            let last = *trace.top().h.last().unwrap();
            let loss = tape.sum(last).unwrap();
            let grads = tape.backward(loss).unwrap();
            let pushed = trace.hidden_before(0, 1);
            let g = grads.wrt(pushed).unwrap();
            assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-8, "{alpha}");
        }
    }
}

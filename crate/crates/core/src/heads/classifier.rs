use crate::model::{ModelError, RunTrace};
use crate::rng::SplitMix64;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Linear classifier over the top-layer hidden state of the last real token.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub proj: ParamId,
    pub bias: ParamId,
    pub classes: usize,
}

impl ClassifierHead {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        Self {
            proj: store.add(format!("{prefix}.proj"), Tensor::glorot(&[classes, hidden], rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[classes])),
            classes,
        }
    }

    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, trace: &RunTrace) -> Result<Var, ModelError> {
        let h = trace
            .last_hidden()
            .ok_or_else(|| ModelError::Contract("cannot classify an empty program".into()))?;
        let w = tape.param(store, self.proj);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(w, h)?;
        Ok(tape.add(z, b)?)
    }

    /// Class distribution for the program.
    pub fn classify(&self, tape: &mut Tape, store: &ParamStore, trace: &RunTrace) -> Result<Vec<f64>, ModelError> {
        let z = self.logits(tape, store, trace)?;
        let p = tape.softmax(z)?;
        Ok(tape.data(p).to_vec())
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::TokenKind::{self, *};
    use crate::model::{AlphaKind, Encoder, EncoderConfig, StackMode};
    use crate::testutil::random_vec;
    use proptest::prelude::*;

    fn setup(seed: u64) -> (ParamStore, Encoder, ClassifierHead) {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(seed);
        let enc = Encoder::new(
            &mut store,
            "enc",
            EncoderConfig {
                vocab_size: 8,
                embedding_size: 3,
                hidden_size: 3,
                layers: 2,
                alpha: AlphaKind::Fc,
                use_stack: true,
            },
            &mut rng,
        );
        let head = ClassifierHead::new(&mut store, "cls", 3, 3, &mut rng);
        (store, enc, head)
    }

    const IDS: [u32; 6] = [4, 2, 5, 3, 0, 0];
    const KINDS: [TokenKind; 6] = [NonTerminal, Open, Terminal, Close, Pad, Pad];

    #[test]
    fn zero_head_is_uniform_and_picks_class_zero() {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(1);
        let enc = Encoder::new(
            &mut store,
            "enc",
            EncoderConfig {
                vocab_size: 8,
                embedding_size: 3,
                hidden_size: 3,
                layers: 1,
                alpha: AlphaKind::MaxPool,
                use_stack: true,
            },
            &mut rng,
        );
        let head = ClassifierHead::new(&mut store, "cls", 3, 2, &mut rng);
        store.get_mut(head.proj).data_mut().fill(0.0);
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &IDS, &KINDS, StackMode::Strict).unwrap();
        let p = head.classify(&mut tape, &store, &trace).unwrap();
        assert_eq!(p, [0.5, 0.5]);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn empty_program_is_rejected() {
        let (store, enc, head) = setup(2);
        let mut tape = Tape::new();
        let trace = enc
            .run(&mut tape, &store, &[0, 0], &[Pad, Pad], StackMode::Strict)
            .unwrap();
        assert!(matches!(
            head.classify(&mut tape, &store, &trace),
            Err(ModelError::Contract(_))
        ));
    }

    #[test]
    fn padding_does_not_change_logits() {
        let (store, enc, head) = setup(3);
        let logits = |n: usize| {
            let mut tape = Tape::new();
            let trace = enc
                .run(&mut tape, &store, &IDS[..n], &KINDS[..n], StackMode::Strict)
                .unwrap();
            let z = head.logits(&mut tape, &store, &trace).unwrap();
            tape.data(z).to_vec()
        };
        assert_eq!(logits(4), logits(6));
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(seed in any::<u64>()) {
            let (store, enc, head) = setup(seed);
            let mut tape = Tape::new();
            let trace = enc.run(&mut tape, &store, &IDS, &KINDS, StackMode::Strict).unwrap();
            let p = head.classify(&mut tape, &store, &trace).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn argmax_ignores_a_constant_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
            let mut rng = SplitMix64::new(seed);
            let z: Vec<f64> = random_vec(6, &mut rng).iter().map(|x| (x * 3.0).round()).collect();
            let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
            prop_assert_eq!(argmax(&z), argmax(&shifted));
        }
    }
}

use crate::ast::TokenKind;
use crate::model::{ModelError, RunTrace};
use crate::rng::SplitMix64;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Linear projection from the top-layer hidden state to next-token logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionHead {
    pub proj: ParamId,
    pub bias: ParamId,
    pub vocab_size: usize,
}

#[derive(Debug, Clone)]
pub struct CompletionOutput {
    /// `logits[t]` scores the token at position `t + 1`.
    pub logits: Vec<Var>,
    pub targets: Vec<u32>,
    pub target_kinds: Vec<TokenKind>,
    /// Mean cross-entropy over `targets`; `None` when there is nothing to predict.
    pub loss: Option<Var>,
}

impl CompletionHead {
    pub fn new(store: &mut ParamStore, prefix: &str, hidden: usize, vocab_size: usize, rng: &mut SplitMix64) -> Self {
        Self {
            proj: store.add(format!("{prefix}.proj"), Tensor::glorot(&[vocab_size, hidden], rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[vocab_size])),
            vocab_size,
        }
    }

    pub fn logits_at(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var, ModelError> {
        let w = tape.param(store, self.proj);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(w, h)?;
        Ok(tape.add(z, b)?)
    }

    /// Scores every position whose successor is a real token. `ids` and
    /// `kinds` are the full padded input the trace was run on.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        trace: &RunTrace,
        ids: &[u32],
        kinds: &[TokenKind],
    ) -> Result<CompletionOutput, ModelError> {
        let n = trace.len().saturating_sub(1);
        let mut out = CompletionOutput {
            logits: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            target_kinds: Vec::with_capacity(n),
            loss: None,
        };
        let mut losses = Vec::with_capacity(n);
        for t in 0..n {
            let target = ids[t + 1];
            let logits = self.logits_at(tape, store, trace.top().h[t])?;
            losses.push(tape.cross_entropy(logits, target as usize)?);
            out.logits.push(logits);
            out.targets.push(target);
            out.target_kinds.push(kinds[t + 1]);
        }
        if !losses.is_empty() {
            let total = tape.add_n(&losses)?;
            let total = tape.sum(total)?;
            out.loss = Some(tape.scale(total, 1.0 / losses.len() as f64)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suggestion {
    pub id: u32,
    pub prob: f64,
}

/// The `k` most probable ids, most probable first; equal scores rank the
/// lower id first.
pub fn predict_topk(logits: &[f64], k: usize) -> Result<Vec<Suggestion>, ModelError> {
    if k == 0 || k > logits.len() {
        return Err(ModelError::Contract(format!("k = {k} outside 1..={}", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| Suggestion {
            id: i as u32,
            prob: exp[i] / total,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlphaKind, Encoder, EncoderConfig, StackMode};
    use crate::testutil::random_vec;
    use proptest::prelude::*;
    use TokenKind::*;

    fn setup() -> (ParamStore, Encoder, CompletionHead) {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(5);
        let enc = Encoder::new(
            &mut store,
            "enc",
            EncoderConfig {
                vocab_size: 9,
                embedding_size: 4,
                hidden_size: 4,
                layers: 1,
                alpha: AlphaKind::MaxPool,
                use_stack: true,
            },
            &mut rng,
        );
        let head = CompletionHead::new(&mut store, "head", 4, 9, &mut rng);
        (store, enc, head)
    }

    fn scalar_cross_entropy(z: &[f64], target: usize) -> f64 {
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let mut s = 0.0;
        for &x in z {
            s += (x - m).exp();
        }
        -(z[target] - m - s.ln())
    }

    #[test]
    fn targets_are_shifted_by_one_and_padding_is_masked() {
        let (store, enc, head) = setup();
        let ids = [4, 2, 5, 6, 3, 0, 0];
        let kinds = [NonTerminal, Open, NonTerminal, Terminal, Close, Pad, Pad];
        let mut tape = Tape::new();
        let trace = enc.run(&mut tape, &store, &ids, &kinds, StackMode::Strict).unwrap();
        let out = head.forward(&mut tape, &store, &trace, &ids, &kinds).unwrap();
        assert_eq!(out.targets, [2, 5, 6, 3]);
        assert_eq!(out.target_kinds, [Open, NonTerminal, Terminal, Close]);

        let mut mean = 0.0;
        for (l, &t) in out.logits.iter().zip(&out.targets) {
            mean += scalar_cross_entropy(tape.data(*l), t as usize) / 4.0;
        }
        assert!((tape.value(out.loss.unwrap()).item() - mean).abs() < 1e-12);
    }

    #[test]
    fn extra_padding_leaves_the_loss_unchanged() {
        let (store, enc, head) = setup();
        let loss = |ids: &[u32], kinds: &[TokenKind]| {
            let mut tape = Tape::new();
            let trace = enc.run(&mut tape, &store, ids, kinds, StackMode::Lenient).unwrap();
            let out = head.forward(&mut tape, &store, &trace, ids, kinds).unwrap();
            tape.value(out.loss.unwrap()).item()
        };
        let a = loss(&[4, 2, 5, 3], &[NonTerminal, Open, NonTerminal, Close]);
        let b = loss(
            &[4, 2, 5, 3, 0, 0, 0],
            &[NonTerminal, Open, NonTerminal, Close, Pad, Pad, Pad],
        );
        assert_eq!(a, b);
    }

    #[test]
    fn topk_tie_break_and_unique_max() {
        let uniform = predict_topk(&[0.3; 6], 4).unwrap();
        assert_eq!(uniform.iter().map(|s| s.id).collect::<Vec<_>>(), [0, 1, 2, 3]);
        let top = predict_topk(&[0.0, 0.0, 5.0, 0.0], 1).unwrap();
        assert_eq!(top[0].id, 2);
        assert!(predict_topk(&[1.0, 2.0], 0).is_err());
        assert!(predict_topk(&[1.0, 2.0], 3).is_err());
        let all = predict_topk(&[1.0, -2.0, 0.5], 3).unwrap();
        assert!((all.iter().map(|s| s.prob).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn topk_matches_a_full_sort(seed in any::<u64>(), n in 1usize..40, k_frac in 0.0f64..1.0) {
            let mut rng = SplitMix64::new(seed);
            // Coarse values force ties.
            let logits: Vec<f64> = random_vec(n, &mut rng).iter().map(|x| (x * 4.0).round()).collect();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let mut pairs: Vec<(f64, usize)> = Vec::new();
            let z: f64 = logits.iter().map(|x| x.exp()).sum();
            for (i, x) in logits.iter().enumerate() {
                pairs.push((x.exp() / z, i));
            }
            // Insertion sort on (prob desc, id asc).
            for i in 1..pairs.len() {
                let mut j = i;
                while j > 0 && (pairs[j].0 > pairs[j - 1].0 + 1e-15
                    || ((pairs[j].0 - pairs[j - 1].0).abs() <= 1e-15 && pairs[j].1 < pairs[j - 1].1)) {
                    pairs.swap(j, j - 1);
                    j -= 1;
                }
            }
            let got: Vec<usize> = predict_topk(&logits, k).unwrap().iter().map(|s| s.id as usize).collect();
            let want: Vec<usize> = pairs.iter().take(k).map(|p| p.1).collect();
            prop_assert_eq!(got, want);
        }
    }
}

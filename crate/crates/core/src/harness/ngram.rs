use std::collections::HashMap;

use super::evaluate::{completion_reports, Evaluation};
use super::HarnessError;
use crate::ast::{escape_field, TokenKind, TokenSequence};
use crate::metrics::{Slice, MRR_CUTOFF};

/// Maximum-likelihood next-token model over the previous `order - 1`
/// tokens, backing off to shorter contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    /// `tables[j]` maps a context of `j` tokens to continuation counts.
    tables: Vec<HashMap<Vec<String>, HashMap<String, usize>>>,
}

impl NgramModel {
    /// Counts every target at positions `1..` with all of its available
    /// contexts up to `order - 1` tokens.
    pub fn train(corpus: &[TokenSequence], order: usize) -> Result<Self, HarnessError> {
        if order == 0 {
            return Err(HarnessError::Config("n-gram order must be at least 1".into()));
        }
        if corpus.iter().all(|s| s.len() < 2) {
            return Err(HarnessError::Data("n-gram training corpus has no targets".into()));
        }
        let mut tables = vec![HashMap::new(); order];
        for seq in corpus {
            let texts = seq.texts();
            for t in 1..texts.len() {
                for (j, table) in tables.iter_mut().enumerate().take(order.min(t + 1)) {
                    let ctx: Vec<String> = texts[t - j..t].iter().map(|s| s.to_string()).collect();
                    let next: &mut HashMap<String, usize> = table.entry(ctx).or_default();
                    *next.entry(texts[t].to_string()).or_default() += 1;
                }
            }
        }
        Ok(Self { order, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Continuation counts after exactly `context`.
    pub fn counts(&self, context: &[&str]) -> Option<&HashMap<String, usize>> {
        let key: Vec<String> = context.iter().map(|s| s.to_string()).collect();
        self.tables.get(context.len())?.get(&key)
    }

    /// Up to `k` continuations of `history`: the longest seen context first,
    /// then shorter ones for tokens not yet listed. Within one context,
    /// higher counts come first, then the byte-wise smaller token.
    pub fn predict(&self, history: &[&str], k: usize) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(k);
        let longest = (self.order - 1).min(history.len());
        for j in (0..=longest).rev() {
            let Some(next) = self.counts(&history[history.len() - j..]) else {
                continue;
            };
            let mut ranked: Vec<(&String, usize)> = next.iter().map(|(t, &c)| (t, c)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            for (t, _) in ranked {
                if out.len() == k {
                    return out;
                }
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
        out
    }
}

/// Next-token accuracy and MRR@10 of `model` on `corpus`, in the same
/// slices as the neural completion model.
pub fn evaluate_ngram(model: &NgramModel, corpus: &[TokenSequence]) -> Result<Evaluation, HarnessError> {
    let (mut golds, mut kinds, mut ranked, mut predictions) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (e, seq) in corpus.iter().enumerate() {
        let texts = seq.texts();
        for t in 1..texts.len() {
            let top = model.predict(&texts[..t], MRR_CUTOFF);
            let kind: TokenKind = seq.tokens[t].kind;
            predictions.push(format!(
                "{e}:{t}\t{}\t{}",
                escape_field(texts[t]),
                top.iter().map(|s| escape_field(s)).collect::<Vec<_>>().join(" ")
            ));
            golds.push(texts[t].to_string());
            kinds.push(kind);
            ranked.push(top);
        }
    }
    if golds.is_empty() {
        return Err(HarnessError::Data("n-gram evaluation corpus has no targets".into()));
    }
    let reports = completion_reports(&golds, &kinds, &ranked)?;
    let headline = reports
        .iter()
        .find(|r| r.metric == "accuracy" && r.slice == Slice::Overall)
        .map_or(0.0, |r| r.value);
    Ok(Evaluation {
        reports,
        predictions,
        headline,
    })
}

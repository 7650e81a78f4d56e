use super::{Example, HarnessError, Network, RunConfig, TaskHead, Vocabularies};
use crate::ast::{encode_sequence, escape_field, serialize_ast, AstNode, TokenKind};
use crate::heads::{argmax, predict_topk, Suggestion};
use crate::metrics::{accuracy, bleu4, mrr_at_10, EvalReport, Slice, MRR_CUTOFF};
use crate::model::StackMode;
use crate::tensor::Tape;

/// Metric reports plus one prediction line per scored item.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    pub predictions: Vec<String>,
    /// The value used for model selection: overall accuracy for completion
    /// (node-type and value targets) and classification, BLEU-4 for
    /// summarization.
    pub headline: f64,
}

/// Bracket policy for one example: truncated programs always run lenient.
pub fn example_mode(mode: StackMode, ex: &Example) -> StackMode {
    if ex.source_len > ex.ids.len() {
        StackMode::Lenient
    } else {
        mode
    }
}

/// Accuracy per slice and MRR@10 for next-token predictions. Slices without
/// positions are omitted. Brackets have their own slice and are left out of
/// `overall`.
pub fn completion_reports<T: PartialEq>(
    golds: &[T],
    kinds: &[TokenKind],
    ranked: &[Vec<T>],
) -> Result<Vec<EvalReport>, HarnessError> {
    let top1: Vec<Option<&T>> = ranked.iter().map(|r| r.first()).collect();
    let golds_ref: Vec<Option<&T>> = golds.iter().map(Some).collect();
    let mut reports = Vec::new();
    let masks = [
        (
            Slice::NonTerminal,
            kinds.iter().map(|k| *k == TokenKind::NonTerminal).collect::<Vec<_>>(),
        ),
        (
            Slice::Terminal,
            kinds.iter().map(|k| *k == TokenKind::Terminal).collect(),
        ),
        (Slice::Bracket, kinds.iter().map(|k| k.is_bracket()).collect()),
        (
            Slice::Overall,
            kinds
                .iter()
                .map(|k| matches!(k, TokenKind::NonTerminal | TokenKind::Terminal))
                .collect(),
        ),
    ];
    for (slice, mask) in &masks {
        if !mask.iter().any(|&m| m) {
            continue;
        }
        reports.push(accuracy(&top1, &golds_ref, Some(mask), *slice)?);
    }
    for (slice, mask) in &masks {
        if *slice == Slice::Bracket || !mask.iter().any(|&m| m) {
            continue;
        }
        let (lists, gs): (Vec<Vec<&T>>, Vec<&T>) = ranked
            .iter()
            .zip(golds)
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((r, g), _)| (r.iter().collect(), g))
            .unzip();
        reports.push(mrr_at_10(&lists, &gs, *slice)?);
    }
    Ok(reports)
}

fn overall_accuracy(reports: &[EvalReport]) -> f64 {
    reports
        .iter()
        .find(|r| r.metric == "accuracy" && r.slice == Slice::Overall)
        .map_or(0.0, |r| r.value)
}

/// Runs `net` over `examples` and scores them with the task's metrics.
pub fn evaluate(
    net: &Network,
    cfg: &RunConfig,
    vocabs: &Vocabularies,
    examples: &[Example],
) -> Result<Evaluation, HarnessError> {
    if examples.is_empty() {
        return Err(HarnessError::Data("evaluation corpus is empty".into()));
    }
    let token = |id: u32| escape_field(vocabs.code.token(id).unwrap_or("<unk>"));
    let mut predictions = Vec::new();
    match &net.head {
        TaskHead::Completion(head) => {
            let k = MRR_CUTOFF.min(head.vocab_size);
            let (mut golds, mut kinds, mut ranked) = (Vec::new(), Vec::new(), Vec::new());
            for (e, ex) in examples.iter().enumerate() {
                let mut tape = Tape::new();
                let trace = net.run(&mut tape, &ex.ids, &ex.kinds, example_mode(cfg.eval_mode, ex))?;
                let out = head.forward(&mut tape, &net.store, &trace, &ex.ids, &ex.kinds)?;
                for (t, (&logits, (&gold, &kind))) in out
                    .logits
                    .iter()
                    .zip(out.targets.iter().zip(&out.target_kinds))
                    .enumerate()
                {
                    let top: Vec<u32> = predict_topk(tape.data(logits), k)?.iter().map(|s| s.id).collect();
                    predictions.push(format!(
                        "{e}:{}\t{}\t{}",
                        t + 1,
                        token(gold),
                        top.iter().map(|&i| token(i)).collect::<Vec<_>>().join(" ")
                    ));
                    golds.push(gold);
                    kinds.push(kind);
                    ranked.push(top);
                }
            }
            if golds.is_empty() {
                return Err(HarnessError::Data(
                    "no completion targets in the evaluation corpus".into(),
                ));
            }
            let reports = completion_reports(&golds, &kinds, &ranked)?;
            Ok(Evaluation {
                headline: overall_accuracy(&reports),
                reports,
                predictions,
            })
        }
        TaskHead::Classification(head) => {
            let (mut preds, mut golds) = (Vec::new(), Vec::new());
            for ex in examples {
                let mut tape = Tape::new();
                let trace = net.run(&mut tape, &ex.ids, &ex.kinds, example_mode(cfg.eval_mode, ex))?;
                let p = argmax(&head.classify(&mut tape, &net.store, &trace)?);
                let gold = ex.label.expect("classification examples carry labels") as usize;
                predictions.push(format!(
                    "{}\t{}",
                    escape_field(&vocabs.labels[gold]),
                    escape_field(&vocabs.labels[p])
                ));
                preds.push(p);
                golds.push(gold);
            }
            let report = accuracy(&preds, &golds, None, Slice::Overall)?;
            Ok(Evaluation {
                headline: report.value,
                reports: vec![report],
                predictions,
            })
        }
        TaskHead::Summarization(dec) => {
            let summary_vocab = vocabs.summary.as_ref().expect("summarization vocabulary");
            let (mut hyps, mut refs) = (Vec::new(), Vec::new());
            for ex in examples {
                let mut tape = Tape::new();
                let trace = net.run(&mut tape, &ex.ids, &ex.kinds, example_mode(cfg.eval_mode, ex))?;
                let hyp: Vec<String> = if trace.is_empty() {
                    Vec::new()
                } else {
                    dec.greedy(&mut tape, &net.store, &trace, cfg.summary_len)?
                        .into_iter()
                        .map(|id| summary_vocab.token(id).unwrap_or("<unk>").to_string())
                        .collect()
                };
                let reference = ex
                    .summary_words
                    .clone()
                    .expect("summarization examples carry summaries");
                predictions.push(format!("{} ||| {}", reference.join(" "), hyp.join(" ")));
                hyps.push(hyp);
                refs.push(reference);
            }
            let bleu = bleu4(&hyps, &refs)?;
            Ok(Evaluation {
                headline: bleu.report.value,
                reports: vec![bleu.report],
                predictions,
            })
        }
    }
}

/// Ranked next-token suggestions after a partial program.
///
/// The tree is serialized and cut to its first `keep` tokens; without
/// `keep`, trailing block closings are dropped so the prefix ends inside
/// the innermost open block. Brackets are always treated leniently.
pub fn complete(
    net: &Network,
    vocabs: &Vocabularies,
    tree: &AstNode,
    k: usize,
    keep: Option<usize>,
) -> Result<Vec<(String, f64)>, HarnessError> {
    let TaskHead::Completion(head) = &net.head else {
        return Err(HarnessError::Config("checkpoint is not a completion model".into()));
    };
    let mut seq = serialize_ast(tree);
    match keep {
        Some(n) => seq.tokens.truncate(n),
        None => {
            while seq.tokens.last().is_some_and(|t| t.kind == TokenKind::Close) {
                seq.tokens.pop();
            }
        }
    }
    if seq.is_empty() {
        return Err(HarnessError::Data("empty prefix".into()));
    }
    let enc = encode_sequence(&seq, &vocabs.code, seq.len());
    let mut tape = Tape::new();
    let trace = net.run(&mut tape, &enc.ids, &enc.kinds, StackMode::Lenient)?;
    let last = trace.last_hidden().expect("non-empty prefix");
    let logits = head.logits_at(&mut tape, &net.store, last)?;
    let top: Vec<Suggestion> = predict_topk(tape.data(logits), k.min(head.vocab_size))?;
    Ok(top
        .into_iter()
        .map(|s| (vocabs.code.token(s.id).unwrap_or("<unk>").to_string(), s.prob))
        .collect())
}

use std::collections::BTreeSet;

use super::{HarnessError, RunConfig, Task};
use crate::ast::{build_vocab, encode_sequence, serialize_ast, CorpusRecord, TokenKind, Vocab, SUMMARY_RESERVED};

/// Vocabularies fixed by the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    pub code: Vocab,
    pub summary: Option<Vocab>,
    /// Class names in sorted order; the index is the class id.
    pub labels: Vec<String>,
}

impl Vocabularies {
    pub fn build(cfg: &RunConfig, train: &[CorpusRecord]) -> Result<Self, HarnessError> {
        if train.is_empty() {
            return Err(HarnessError::Data("training corpus is empty".into()));
        }
        check_task(cfg.task, train)?;
        let seqs: Vec<_> = train.iter().map(|r| serialize_ast(&r.tree)).collect();
        let code = build_vocab(&seqs, cfg.vocab_size)?;
        let labels = match cfg.task {
            Task::Classification => train
                .iter()
                .filter_map(|r| r.label.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            _ => Vec::new(),
        };
        let summary = match cfg.task {
            Task::Summarization => {
                let words = train
                    .iter()
                    .flat_map(|r| r.summary.iter().flatten())
                    .map(String::as_str);
                Some(Vocab::from_counts(
                    words.chain(["</s>"]),
                    SUMMARY_RESERVED,
                    cfg.summary_vocab_size,
                )?)
            }
            _ => None,
        };
        Ok(Self { code, summary, labels })
    }

    pub fn label_id(&self, label: &str) -> Option<u32> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
            .map(|i| i as u32)
    }
}

/// One encoded program, unpadded.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub kinds: Vec<TokenKind>,
    pub label: Option<u32>,
    pub summary: Option<Vec<u32>>,
    /// Reference words as written, for BLEU.
    pub summary_words: Option<Vec<String>>,
    /// Serialized length before truncation.
    pub source_len: usize,
}

fn check_task(task: Task, records: &[CorpusRecord]) -> Result<(), HarnessError> {
    let missing = match task {
        Task::Completion => None,
        Task::Classification => records.iter().position(|r| r.label.is_none()).map(|i| (i, "label")),
        Task::Summarization => records.iter().position(|r| r.summary.is_none()).map(|i| (i, "summary")),
    };
    match missing {
        Some((i, what)) => Err(HarnessError::Config(format!(
            "{task} needs a {what} on every record; record {} has none",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Encodes records for `cfg.task`. With `drop_overlong`, summarization
/// examples whose program exceeds `max_len` or whose summary exceeds
/// `summary_len` are left out; otherwise programs are truncated to
/// `max_len`.
pub fn encode_records(
    cfg: &RunConfig,
    vocabs: &Vocabularies,
    records: &[CorpusRecord],
    drop_overlong: bool,
) -> Result<Vec<Example>, HarnessError> {
    check_task(cfg.task, records)?;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let seq = serialize_ast(&r.tree);
        if drop_overlong
            && cfg.task == Task::Summarization
            && (seq.len() > cfg.max_len || r.summary.as_ref().is_some_and(|s| s.len() > cfg.summary_len))
        {
            continue;
        }
        let enc = encode_sequence(&seq, &vocabs.code, cfg.max_len).unpadded();
        let label =
            match (cfg.task, &r.label) {
                (Task::Classification, Some(l)) => Some(vocabs.label_id(l).ok_or_else(|| {
                    HarnessError::Config(format!("record {}: label {l:?} not seen in training", i + 1))
                })?),
                _ => None,
            };
        let (summary, summary_words) = match (&vocabs.summary, &r.summary) {
            (Some(v), Some(words)) => (Some(words.iter().map(|w| v.id(w)).collect()), Some(words.clone())),
            _ => (None, None),
        };
        out.push(Example {
            ids: enc.ids,
            kinds: enc.kinds,
            label,
            summary,
            summary_words,
            source_len: seq.len(),
        });
    }
    Ok(out)
}

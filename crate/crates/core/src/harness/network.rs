use super::{HarnessError, RunConfig, Task, Vocabularies};
use crate::ast::TokenKind;
use crate::heads::{AttentionDecoder, ClassifierHead, CompletionHead, DecoderConfig};
use crate::model::{Encoder, EncoderConfig, ModelError, RunTrace, StackMode};
use crate::rng::SplitMix64;
use crate::tensor::{ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskHead {
    Completion(CompletionHead),
    Classification(ClassifierHead),
    Summarization(AttentionDecoder),
}

/// Encoder, task head and the parameters they index into.
#[derive(Debug, Clone)]
pub struct Network {
    pub encoder: Encoder,
    pub head: TaskHead,
    pub store: ParamStore,
}

impl Network {
    /// Fresh parameters drawn from `rng` in a fixed order: embedding, each
    /// encoder layer, then the head.
    pub fn new(cfg: &RunConfig, vocabs: &Vocabularies, rng: &mut SplitMix64) -> Result<Self, HarnessError> {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(
            &mut store,
            "encoder",
            EncoderConfig {
                vocab_size: vocabs.code.len(),
                embedding_size: cfg.embedding_size,
                hidden_size: cfg.hidden_size,
                layers: cfg.layers,
                alpha: cfg.alpha,
                use_stack: cfg.stack,
            },
            rng,
        );
        let head = match cfg.task {
            Task::Completion => TaskHead::Completion(CompletionHead::new(
                &mut store,
                "completion",
                cfg.hidden_size,
                vocabs.code.len(),
                rng,
            )),
            Task::Classification => {
                if vocabs.labels.len() < 2 {
                    return Err(HarnessError::Data(format!(
                        "classification needs at least 2 labels, training corpus has {}",
                        vocabs.labels.len()
                    )));
                }
                TaskHead::Classification(ClassifierHead::new(
                    &mut store,
                    "classifier",
                    cfg.hidden_size,
                    vocabs.labels.len(),
                    rng,
                ))
            }
            Task::Summarization => {
                let summary = vocabs
                    .summary
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("summarization needs a summary vocabulary".into()))?;
                TaskHead::Summarization(AttentionDecoder::new(
                    &mut store,
                    "decoder",
                    DecoderConfig {
                        vocab_size: summary.len(),
                        embedding_size: cfg.summary_embedding_size,
                        hidden_size: cfg.hidden_size,
                        attention_size: cfg.attention_size,
                    },
                    rng,
                ))
            }
        };
        Ok(Self { encoder, head, store })
    }

    pub fn run(
        &self,
        tape: &mut Tape,
        ids: &[u32],
        kinds: &[TokenKind],
        mode: StackMode,
    ) -> Result<RunTrace, ModelError> {
        self.encoder.run(tape, &self.store, ids, kinds, mode)
    }

    /// Training loss of one example; `None` when it has nothing to score.
    pub fn loss(
        &self,
        tape: &mut Tape,
        ids: &[u32],
        kinds: &[TokenKind],
        label: Option<u32>,
        summary: Option<&[u32]>,
        mode: StackMode,
    ) -> Result<Option<Var>, ModelError> {
        let trace = self.run(tape, ids, kinds, mode)?;
        if trace.is_empty() {
            return Ok(None);
        }
        match &self.head {
            TaskHead::Completion(h) => Ok(h.forward(tape, &self.store, &trace, ids, kinds)?.loss),
            TaskHead::Classification(h) => {
                let label =
                    label.ok_or_else(|| ModelError::Contract("classification example without a label".into()))?;
                let z = h.logits(tape, &self.store, &trace)?;
                Ok(Some(tape.cross_entropy(z, label as usize)?))
            }
            TaskHead::Summarization(d) => {
                let summary =
                    summary.ok_or_else(|| ModelError::Contract("summarization example without a summary".into()))?;
                Ok(Some(d.teacher_forced_loss(tape, &self.store, &trace, summary)?))
            }
        }
    }

    /// Deterministic fingerprint of the forward pass on one input: every
    /// top-layer hidden state followed by the head's output.
    pub fn probe(&self, ids: &[u32], kinds: &[TokenKind], mode: StackMode) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let trace = self.run(&mut tape, ids, kinds, mode)?;
        let mut out: Vec<f64> = trace.top().h.iter().flat_map(|&h| tape.data(h).to_vec()).collect();
        let Some(last) = trace.last_hidden() else {
            return Ok(out);
        };
        let tail = match &self.head {
            TaskHead::Completion(h) => h.logits_at(&mut tape, &self.store, last)?,
            TaskHead::Classification(h) => h.logits(&mut tape, &self.store, &trace)?,
            TaskHead::Summarization(d) => d.teacher_forced_loss(&mut tape, &self.store, &trace, &[])?,
        };
        out.extend_from_slice(tape.data(tail));
        Ok(out)
    }
}

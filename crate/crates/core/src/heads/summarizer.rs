use crate::ast::{BOS_ID, EOS_ID};
use crate::model::{lstm_step, BoundLayer, LstmLayer, ModelError, RunTrace};
use crate::rng::SplitMix64;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    /// Must equal the encoder hidden size: the decoder starts from the
    /// encoder's final state.
    pub hidden_size: usize,
    pub attention_size: usize,
}

/// LSTM decoder with additive attention over the encoder's top-layer states.
///
/// Step `i` attends with the previous decoder state `s`, feeds
/// `[embed(y_prev); context]` to the cell, and predicts from `[s'; context]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDecoder {
    pub config: DecoderConfig,
    pub embedding: ParamId,
    pub cell: LstmLayer,
    pub query: ParamId,
    pub key: ParamId,
    pub score: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Encoder states prepared for attention.
#[derive(Debug, Clone, Copy)]
pub struct EncoderMemory {
    /// `[n, hidden]`.
    pub states: Var,
    /// `[n, attention]`, the keys projected once per sequence.
    pub keys: Var,
    pub len: usize,
}

struct Bound {
    embedding: Var,
    cell: BoundLayer,
    query: Var,
    score: Var,
    out_w: Var,
    out_b: Var,
}

impl AttentionDecoder {
    pub fn new(store: &mut ParamStore, prefix: &str, config: DecoderConfig, rng: &mut SplitMix64) -> Self {
        let DecoderConfig {
            vocab_size: v,
            embedding_size: e,
            hidden_size: h,
            attention_size: a,
        } = config;
        let embedding = store.add(format!("{prefix}.embedding"), Tensor::glorot(&[v, e], rng));
        let cell = LstmLayer::new(store, &format!("{prefix}.cell"), e + h, h, None, rng);
        let query = store.add(format!("{prefix}.attn.W_query"), Tensor::glorot(&[a, h], rng));
        let key = store.add(format!("{prefix}.attn.W_key"), Tensor::glorot(&[h, a], rng));
        let r = (6.0 / (a + 1) as f64).sqrt();
        let score = store.add(
            format!("{prefix}.attn.score"),
            Tensor::vector((0..a).map(|_| rng.uniform(r)).collect()),
        );
        let out_w = store.add(format!("{prefix}.out.W"), Tensor::glorot(&[v, 2 * h], rng));
        let out_b = store.add(format!("{prefix}.out.b"), Tensor::zeros(&[v]));
        Self {
            config,
            embedding,
            cell,
            query,
            key,
            score,
            out_w,
            out_b,
        }
    }

    fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Bound {
        Bound {
            embedding: tape.param(store, self.embedding),
            cell: self.cell.bind(tape, store),
            query: tape.param(store, self.query),
            score: tape.param(store, self.score),
            out_w: tape.param(store, self.out_w),
            out_b: tape.param(store, self.out_b),
        }
    }

    /// Stacks the top-layer encoder states; padding never reaches the trace,
    /// so every row is attendable.
    pub fn memory(&self, tape: &mut Tape, store: &ParamStore, trace: &RunTrace) -> Result<EncoderMemory, ModelError> {
        if trace.is_empty() {
            return Err(ModelError::Contract("attention over an empty encoder trace".into()));
        }
        let states = tape.stack_rows(&trace.top().h)?;
        let key = tape.param(store, self.key);
        let keys = tape.matmul(states, key)?;
        Ok(EncoderMemory {
            states,
            keys,
            len: trace.len(),
        })
    }

    /// `score_j = v . tanh(W_q s + W_k h_j)`, weights = softmax(score),
    /// context = sum_j weights_j h_j. Returns `(context, weights)`.
    pub fn attention_context(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: Var,
        memory: &EncoderMemory,
    ) -> Result<(Var, Var), ModelError> {
        let b = self.bind(tape, store);
        self.attend(tape, &b, state, memory)
    }

    fn attend(&self, tape: &mut Tape, b: &Bound, state: Var, memory: &EncoderMemory) -> Result<(Var, Var), ModelError> {
        let q = tape.matmul(b.query, state)?;
        let scores = tape.additive_scores(q, memory.keys, b.score)?;
        let weights = tape.softmax(scores)?;
        let context = tape.matmul(weights, memory.states)?;
        Ok((context, weights))
    }

    /// One decoder step; returns `(logits, s', c')`.
    fn step(
        &self,
        tape: &mut Tape,
        b: &Bound,
        memory: &EncoderMemory,
        prev_token: u32,
        s: Var,
        c: Var,
    ) -> Result<(Var, Var, Var), ModelError> {
        let (context, _) = self.attend(tape, b, s, memory)?;
        let emb = tape.row(b.embedding, prev_token as usize)?;
        let x = tape.concat(&[emb, context])?;
        let (s, c) = lstm_step(tape, &b.cell, x, s, c)?;
        let feat = tape.concat(&[s, context])?;
        let z = tape.matmul(b.out_w, feat)?;
        let logits = tape.add(z, b.out_b)?;
        Ok((logits, s, c))
    }

    fn initial_state(&self, tape: &Tape, trace: &RunTrace) -> Result<(Var, Var), ModelError> {
        let top = trace.top();
        let (s, c) = (*top.h.last().expect("non-empty"), *top.c.last().expect("non-empty"));
        if tape.value(s).numel() != self.config.hidden_size {
            return Err(ModelError::Contract(format!(
                "decoder hidden size {} != encoder hidden size {}",
                self.config.hidden_size,
                tape.value(s).numel()
            )));
        }
        Ok((s, c))
    }

    /// Teacher-forced mean cross-entropy of `reference` followed by the
    /// end token.
    pub fn teacher_forced_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        trace: &RunTrace,
        reference: &[u32],
    ) -> Result<Var, ModelError> {
        let memory = self.memory(tape, store, trace)?;
        let b = self.bind(tape, store);
        let (mut s, mut c) = self.initial_state(tape, trace)?;
        let mut prev = BOS_ID;
        let mut losses = Vec::with_capacity(reference.len() + 1);
        for &target in reference.iter().chain(std::iter::once(&EOS_ID)) {
            let (logits, s2, c2) = self.step(tape, &b, &memory, prev, s, c)?;
            losses.push(tape.cross_entropy(logits, target as usize)?);
            (s, c, prev) = (s2, c2, target);
        }
        let total = tape.add_n(&losses)?;
        let total = tape.sum(total)?;
        Ok(tape.scale(total, 1.0 / losses.len() as f64)?)
    }

    /// Argmax decoding; stops at the end token (not emitted) or after
    /// `max_len` tokens.
    pub fn greedy(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        trace: &RunTrace,
        max_len: usize,
    ) -> Result<Vec<u32>, ModelError> {
        let memory = self.memory(tape, store, trace)?;
        let b = self.bind(tape, store);
        let (mut s, mut c) = self.initial_state(tape, trace)?;
        let mut prev = BOS_ID;
        let mut out = Vec::new();
        while out.len() < max_len {
            let (logits, s2, c2) = self.step(tape, &b, &memory, prev, s, c)?;
            let next = super::argmax(tape.data(logits)) as u32;
            if next == EOS_ID {
                break;
            }
            out.push(next);
            (s, c, prev) = (s2, c2, next);
        }
        Ok(out)
    }
}

//! Single-file binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "TRSTACK1" | version u32
//! config str | code vocab str | summary vocab (u8 flag, str) | labels (u32 n, str*)
//! epoch u32 | best metric f64
//! params:  u32 n, then n x (name str, ndim u32, dims u64*, values f64*)
//! adam:    step u64, lr/beta1/beta2/epsilon f64, then m and v per param
//! rng state u64
//! probe:   u32 n, n x (id u32, kind u8), u32 m, m x f64
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. There is no checksum: a
//! changed value shows up as probe divergence.

use std::path::Path;

use thiserror::Error;

use super::{parse_config_file, HarnessError, Network, RunConfig, Vocabularies};
use crate::ast::{TokenKind, Vocab, CODE_RESERVED, SUMMARY_RESERVED};
use crate::model::StackMode;
use crate::tensor::{Adam, AdamConfig, Tensor};

pub const MAGIC: &[u8; 8] = b"TRSTACK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint truncated at byte {offset}: {needed} more bytes expected")]
    Truncated { offset: usize, needed: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub vocabs: Vocabularies,
    pub epoch: usize,
    pub best_metric: f64,
    pub params: Vec<(String, Tensor)>,
    pub adam_config: AdamConfig,
    pub adam_step: u64,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    pub rng_state: u64,
    pub probe_ids: Vec<u32>,
    pub probe_kinds: Vec<TokenKind>,
    pub probe_output: Vec<f64>,
}

/// Result of re-running the stored probe input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub outputs: usize,
    /// First index whose bits differ: `(index, stored, recomputed)`.
    pub first_divergence: Option<(usize, f64, f64)>,
}

impl ProbeReport {
    pub fn bitwise_equal(&self) -> bool {
        self.first_divergence.is_none()
    }
}

fn kind_code(k: TokenKind) -> u8 {
    match k {
        TokenKind::NonTerminal => 0,
        TokenKind::Terminal => 1,
        TokenKind::Open => 2,
        TokenKind::Close => 3,
        TokenKind::Pad => 4,
    }
}

fn kind_from_code(c: u8) -> Option<TokenKind> {
    Some(match c {
        0 => TokenKind::NonTerminal,
        1 => TokenKind::Terminal,
        2 => TokenKind::Open,
        3 => TokenKind::Close,
        4 => TokenKind::Pad,
        _ => return None,
    })
}

/// Runs the network on the probe input under the evaluation bracket policy
/// relaxed to lenient, so truncated probes still pass.
pub fn probe_output(net: &Network, ids: &[u32], kinds: &[TokenKind]) -> Result<Vec<f64>, HarnessError> {
    Ok(net.probe(ids, kinds, StackMode::Lenient)?)
}

impl Checkpoint {
    /// Snapshot of a network, its optimizer and RNG, with the probe output
    /// recomputed from `probe_ids`.
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        config: &RunConfig,
        vocabs: &Vocabularies,
        net: &Network,
        adam: &Adam,
        rng_state: u64,
        epoch: usize,
        best_metric: f64,
        probe_ids: &[u32],
        probe_kinds: &[TokenKind],
    ) -> Result<Self, HarnessError> {
        Ok(Self {
            config: config.clone(),
            vocabs: vocabs.clone(),
            epoch,
            best_metric,
            params: net.store.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
            adam_config: adam.config,
            adam_step: adam.step_count(),
            adam_m: adam.first_moment().to_vec(),
            adam_v: adam.second_moment().to_vec(),
            rng_state,
            probe_ids: probe_ids.to_vec(),
            probe_kinds: probe_kinds.to_vec(),
            probe_output: probe_output(net, probe_ids, probe_kinds)?,
        })
    }

    /// Rebuilds the network and loads every stored tensor into it by name.
    pub fn network(&self) -> Result<Network, HarnessError> {
        let mut rng = crate::rng::SplitMix64::new(0);
        let mut net = Network::new(&self.config, &self.vocabs, &mut rng)?;
        if net.store.len() != self.params.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} stored tensors, the configured network has {}",
                self.params.len(),
                net.store.len()
            ))
            .into());
        }
        for (name, tensor) in &self.params {
            let id = net
                .store
                .find(name)
                .ok_or_else(|| CheckpointError::Corrupt(format!("unknown tensor {name:?}")))?;
            let slot = net.store.get_mut(id);
            if slot.shape() != tensor.shape() {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {name:?} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slot.shape()
                ))
                .into());
            }
            slot.data_mut().copy_from_slice(tensor.data());
        }
        Ok(net)
    }

    pub fn optimizer(&self) -> Result<Adam, HarnessError> {
        Adam::from_parts(
            self.adam_config,
            self.adam_step,
            self.adam_m.clone(),
            self.adam_v.clone(),
        )
        .map_err(|e| CheckpointError::Corrupt(e.to_string()).into())
    }

    /// Loads the network, re-runs the probe and compares bit patterns.
    pub fn verify(&self) -> Result<ProbeReport, HarnessError> {
        let net = self.network()?;
        let fresh = probe_output(&net, &self.probe_ids, &self.probe_kinds)?;
        let first_divergence = self
            .probe_output
            .iter()
            .zip(&fresh)
            .position(|(a, b)| a.to_bits() != b.to_bits())
            .map(|i| (i, self.probe_output[i], fresh[i]))
            .or_else(|| {
                let n = self.probe_output.len().min(fresh.len());
                (self.probe_output.len() != fresh.len()).then(|| {
                    (
                        n,
                        self.probe_output.get(n).copied().unwrap_or(f64::NAN),
                        fresh.get(n).copied().unwrap_or(f64::NAN),
                    )
                })
            });
        Ok(ProbeReport {
            outputs: self.probe_output.len(),
            first_divergence,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(&self.config.to_file_string());
        w.str(&self.vocabs.code.to_file_string());
        match &self.vocabs.summary {
            Some(v) => {
                w.u8(1);
                w.str(&v.to_file_string());
            }
            None => w.u8(0),
        }
        w.u32(self.vocabs.labels.len() as u32);
        for l in &self.vocabs.labels {
            w.str(l);
        }
        w.u32(self.epoch as u32);
        w.f64(self.best_metric);
        w.u32(self.params.len() as u32);
        for (name, t) in &self.params {
            w.str(name);
            w.tensor(t);
        }
        w.u64(self.adam_step);
        for x in [
            self.adam_config.lr,
            self.adam_config.beta1,
            self.adam_config.beta2,
            self.adam_config.epsilon,
        ] {
            w.f64(x);
        }
        w.u32(self.adam_m.len() as u32);
        for (m, v) in self.adam_m.iter().zip(&self.adam_v) {
            w.tensor(m);
            w.tensor(v);
        }
        w.u64(self.rng_state);
        w.u32(self.probe_ids.len() as u32);
        for (&id, &k) in self.probe_ids.iter().zip(&self.probe_kinds) {
            w.u32(id);
            w.u8(kind_code(k));
        }
        w.u32(self.probe_output.len() as u32);
        for &x in &self.probe_output {
            w.f64(x);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let corrupt = |e: HarnessError| CheckpointError::Corrupt(e.to_string());
        let config_text = r.str()?;
        let config = parse_config_file(&config_text)
            .and_then(|pairs| RunConfig::resolve(&pairs, &[]))
            .map_err(corrupt)?;
        let code = Vocab::parse_file(&r.str()?, CODE_RESERVED).map_err(|e| corrupt(e.into()))?;
        let summary = match r.u8()? {
            0 => None,
            1 => Some(Vocab::parse_file(&r.str()?, SUMMARY_RESERVED).map_err(|e| corrupt(e.into()))?),
            f => return Err(CheckpointError::Corrupt(format!("summary vocabulary flag {f}"))),
        };
        let n_labels = r.count(4)?;
        let labels = (0..n_labels).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CheckpointError::Corrupt("labels are not strictly sorted".into()));
        }
        let epoch = r.u32()? as usize;
        let best_metric = r.f64()?;
        let n_params = r.count(8)?;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = r.str()?;
            params.push((name, r.tensor()?));
        }
        let adam_step = r.u64()?;
        let adam_config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let n_moments = r.count(8)?;
        if n_moments != n_params {
            return Err(CheckpointError::Corrupt(format!(
                "{n_moments} optimizer moments for {n_params} tensors"
            )));
        }
        let mut adam_m = Vec::with_capacity(n_moments);
        let mut adam_v = Vec::with_capacity(n_moments);
        for (name, p) in &params {
            let (m, v) = (r.tensor()?, r.tensor()?);
            if m.shape() != p.shape() || v.shape() != p.shape() {
                return Err(CheckpointError::Corrupt(format!(
                    "optimizer moments of {name:?} mis-shaped"
                )));
            }
            adam_m.push(m);
            adam_v.push(v);
        }
        let rng_state = r.u64()?;
        let n_probe = r.count(5)?;
        let mut probe_ids = Vec::with_capacity(n_probe);
        let mut probe_kinds = Vec::with_capacity(n_probe);
        for _ in 0..n_probe {
            probe_ids.push(r.u32()?);
            let k = r.u8()?;
            probe_kinds.push(kind_from_code(k).ok_or_else(|| CheckpointError::Corrupt(format!("token kind {k}")))?);
        }
        let n_out = r.count(8)?;
        let probe_output = (0..n_out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            vocabs: Vocabularies { code, summary, labels },
            epoch,
            best_metric,
            params,
            adam_config,
            adam_step,
            adam_m,
            adam_v,
            rng_state,
            probe_ids,
            probe_kinds,
            probe_output,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.encode()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self::decode(&bytes)?)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.bytes(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.bytes(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.bytes(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let rest = self.buf.len() - self.pos;
        if n > rest {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n - rest,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    /// A u32 element count, checked against the bytes left when each
    /// element needs at least `min_size` bytes.
    fn count(&mut self, min_size: usize) -> Result<usize, CheckpointError> {
        let n = self.u32()? as usize;
        let rest = self.buf.len() - self.pos;
        if n.saturating_mul(min_size) > rest {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n * min_size - rest,
            });
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| CheckpointError::Corrupt("string is not UTF-8".into()))
    }
    fn tensor(&mut self) -> Result<Tensor, CheckpointError> {
        let ndim = self.count(8)?;
        let mut dims = Vec::with_capacity(ndim);
        let mut numel: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(self.u64()?).map_err(|_| CheckpointError::Corrupt("dimension overflow".into()))?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| CheckpointError::Corrupt("tensor size overflow".into()))?;
            dims.push(d);
        }
        let bytes = numel
            .checked_mul(8)
            .ok_or_else(|| CheckpointError::Corrupt("tensor size overflow".into()))?;
        let raw = self.take(bytes)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(dims, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

//! Accuracy, MRR@10 and corpus-level BLEU-4.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("contract violated: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(MetricError::Contract(msg.into()))
}

/// Ranks at or beyond this cutoff score zero reciprocal rank.
pub const MRR_CUTOFF: usize = 10;
pub const BLEU_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slice {
    #[serde(rename = "overall")]
    Overall,
    #[serde(rename = "NT")]
    NonTerminal,
    #[serde(rename = "T")]
    Terminal,
    #[serde(rename = "bracket")]
    Bracket,
}

impl Slice {
    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Overall => "overall",
            Slice::NonTerminal => "NT",
            Slice::Terminal => "T",
            Slice::Bracket => "bracket",
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One metric value. For accuracy and MRR `value = numerator / denominator`;
/// for BLEU the counts are the candidate and reference token totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub slice: Slice,
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "metric={}\nslice={}\nvalue={}\nnumerator={}\ndenominator={}\n",
            self.metric, self.slice, self.value, self.numerator, self.denominator
        )
    }

    /// The value as printed for people: BLEU on a 0-100 scale, the rest as is.
    pub fn display_value(&self) -> f64 {
        if self.metric == "bleu4" {
            self.value * 100.0
        } else {
            self.value
        }
    }
}

/// Text blocks separated by blank lines.
pub fn reports_to_text(reports: &[EvalReport]) -> String {
    reports.iter().map(EvalReport::to_text).collect::<Vec<_>>().join("\n")
}

pub fn reports_to_json(reports: &[EvalReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Fraction of positions selected by `mask` where prediction equals gold.
/// `None` selects every position.
pub fn accuracy<T: PartialEq>(
    predictions: &[T],
    golds: &[T],
    mask: Option<&[bool]>,
    slice: Slice,
) -> Result<EvalReport> {
    if predictions.len() != golds.len() {
        return contract(format!("{} predictions for {} golds", predictions.len(), golds.len()));
    }
    if let Some(m) = mask {
        if m.len() != golds.len() {
            return contract(format!("mask of {} for {} positions", m.len(), golds.len()));
        }
    }
    let selected = |i: usize| mask.is_none_or(|m| m[i]);
    let (mut correct, mut total) = (0usize, 0usize);
    for (i, (p, g)) in predictions.iter().zip(golds).enumerate() {
        if selected(i) {
            total += 1;
            correct += usize::from(p == g);
        }
    }
    if total == 0 {
        return contract(format!("empty {slice} slice"));
    }
    Ok(EvalReport {
        metric: "accuracy".into(),
        slice,
        value: correct as f64 / total as f64,
        numerator: correct as f64,
        denominator: total as f64,
    })
}

/// 1-based rank of `gold` within the first [`MRR_CUTOFF`] suggestions.
pub fn rank_within_cutoff<T: PartialEq>(ranked: &[T], gold: &T) -> Option<usize> {
    ranked.iter().take(MRR_CUTOFF).position(|x| x == gold).map(|i| i + 1)
}

/// Mean reciprocal rank with ranks past [`MRR_CUTOFF`] scored zero.
pub fn mrr_at_10<T: PartialEq>(ranked: &[Vec<T>], golds: &[T], slice: Slice) -> Result<EvalReport> {
    if ranked.len() != golds.len() {
        return contract(format!("{} ranked lists for {} golds", ranked.len(), golds.len()));
    }
    if golds.is_empty() {
        return contract("empty query set");
    }
    // Summed per rank so the result does not depend on query order.
    let mut hits = [0usize; MRR_CUTOFF + 1];
    for (i, (list, gold)) in ranked.iter().zip(golds).enumerate() {
        if list.is_empty() {
            return contract(format!("query {i} has no suggestions"));
        }
        if let Some(r) = rank_within_cutoff(list, gold) {
            hits[r] += 1;
        }
    }
    let sum: f64 = (1..=MRR_CUTOFF).map(|r| hits[r] as f64 / r as f64).sum();
    Ok(EvalReport {
        metric: "mrr@10".into(),
        slice,
        value: sum / golds.len() as f64,
        numerator: sum,
        denominator: golds.len() as f64,
    })
}

/// Corpus BLEU-4 with its intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub report: EvalReport,
    /// Clipped matches and candidate n-gram totals per order, before smoothing.
    pub matches: [usize; BLEU_ORDER],
    pub totals: [usize; BLEU_ORDER],
    /// Precisions after smoothing.
    pub precisions: [f64; BLEU_ORDER],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// `BP = 1` if `c > r`, else `exp(1 - r / c)`; zero for an empty candidate side.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len > reference_len {
        1.0
    } else if candidate_len == 0 {
        0.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Corpus-level BLEU over paired candidates and references: uniform weights
/// `1/4`, clipped n-gram precision, and an order with no clipped match
/// scored `(0 + 1) / (total + 1)`.
pub fn bleu4<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuScore> {
    if candidates.is_empty() {
        return contract("empty candidate set");
    }
    if candidates.len() != references.len() {
        return contract(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        ));
    }
    let mut matches = [0usize; BLEU_ORDER];
    let mut totals = [0usize; BLEU_ORDER];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refr) in candidates.iter().zip(references) {
        c += cand.len();
        r += refr.len();
        for n in 1..=BLEU_ORDER {
            let ref_counts = ngram_counts(refr, n);
            for (gram, count) in ngram_counts(cand, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0; BLEU_ORDER];
    for n in 0..BLEU_ORDER {
        precisions[n] = if matches[n] == 0 {
            1.0 / (totals[n] + 1) as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        };
    }
    let bp = brevity_penalty(c, r);
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_ORDER as f64;
    let value = bp * log_mean.exp();
    Ok(BleuScore {
        report: EvalReport {
            metric: "bleu4".into(),
            slice: Slice::Overall,
            value,
            numerator: c as f64,
            denominator: r as f64,
        },
        matches,
        totals,
        precisions,
        brevity_penalty: bp,
        candidate_len: c,
        reference_len: r,
    })
}

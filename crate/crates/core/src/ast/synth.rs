//! Seeded generators for small labelled program corpora.
//!
//! All trees use one of the following shapes, all rooted at a `Module`
//! block:
//!
//! * completion: a handful of fixed program templates whose slot leaves are
//!   filled with per-program identifiers, so the same identifier recurs
//!   within a program;
//! * nesting families: two block types arranged either nested or in
//!   sequence, each family a distinct arrangement, padded with random
//!   leaves;
//! * long dependency: a `Marker` leaf whose value is the label, followed by
//!   a block whose contents are random filler of an exact serialized length;
//! * summarization: random top-level statements, summarised by the
//!   lower-cased types of the top-level blocks.

use super::{AstError, AstNode, CorpusRecord};
use crate::rng::SplitMix64;

pub const ROOT_TYPE: &str = "Module";
pub const MARKER_TYPE: &str = "Marker";

#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    /// Unlabelled programs for next-token prediction.
    Completion {
        templates: usize,
        slots: usize,
    },
    NestingFamily {
        families: usize,
    },
    LongDependency {
        classes: usize,
        filler_len: usize,
    },
    Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub block_types: Vec<String>,
    pub leaf_types: Vec<String>,
    pub values: Vec<String>,
    pub max_depth: usize,
    pub max_fanout: usize,
    pub examples: usize,
    pub rule: LabelRule,
}

impl GeneratorConfig {
    /// A small default alphabet with the given bounds and rule.
    pub fn with_rule(rule: LabelRule, examples: usize, max_depth: usize, max_fanout: usize) -> Self {
        let strs = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            block_types: strs(&["While", "If", "For", "Call", "Assign"]),
            leaf_types: strs(&["Name", "Num", "Str", "Attr"]),
            values: (0..8).map(|i| format!("v{i}")).collect(),
            max_depth,
            max_fanout,
            examples,
            rule,
        }
    }

    fn validate(&self) -> Result<(), AstError> {
        let bad = |m: String| Err(AstError::Config(m));
        if self.max_depth == 0 || self.max_fanout == 0 {
            return bad("depth and fanout bounds must be positive".into());
        }
        if self.block_types.is_empty() || self.leaf_types.is_empty() || self.values.is_empty() {
            return bad("block, leaf and value alphabets must be non-empty".into());
        }
        match self.rule {
            LabelRule::Completion { templates, .. } => {
                if templates == 0 {
                    return bad("completion needs at least one template".into());
                }
                if self.max_depth < 2 {
                    return bad("completion programs need depth >= 2".into());
                }
            }
            LabelRule::NestingFamily { families } => {
                let b = self.block_types.len();
                let available = 2 * b * b.saturating_sub(1);
                if families < 2 || families > available {
                    return bad(format!("{families} nesting families requested, {available} available"));
                }
                if self.max_depth < 4 || self.max_fanout < 2 {
                    return bad("nesting families need depth >= 4 and fanout >= 2".into());
                }
            }
            LabelRule::LongDependency { classes, filler_len } => {
                if classes < 2 {
                    return bad("long-dependency labels need at least 2 classes".into());
                }
                if self.max_depth < 3 || self.max_fanout < 2 {
                    return bad("long-dependency programs need depth >= 3 and fanout >= 2".into());
                }
                let cap = forest_capacity(self.max_depth - 2, self.max_fanout);
                if filler_len == 0 || filler_len > cap {
                    return bad(format!("filler length {filler_len} outside 1..={cap} for these bounds"));
                }
            }
            LabelRule::Summary => {
                if self.max_depth < 3 {
                    return bad("summarization programs need depth >= 3".into());
                }
            }
        }
        Ok(())
    }
}

/// Generates `config.examples` records. Identical configs and seeds give
/// identical corpora.
pub fn generate_synthetic_corpus(config: &GeneratorConfig, seed: u64) -> Result<Vec<CorpusRecord>, AstError> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let g = Gen { cfg: config };
    match config.rule {
        LabelRule::Completion { templates, slots } => {
            let tpls: Vec<AstNode> = (0..templates).map(|_| g.template(&mut rng, slots)).collect();
            Ok((0..config.examples)
                .map(|_| {
                    let t = rng.choose(&tpls);
                    let fills: Vec<&String> = (0..slots).map(|_| rng.choose(&config.values)).collect();
                    CorpusRecord {
                        tree: fill_slots(t, &fills),
                        label: None,
                        summary: None,
                    }
                })
                .collect())
        }
        LabelRule::NestingFamily { families } => {
            let patterns = nesting_patterns(&config.block_types, families);
            let mut labels: Vec<usize> = (0..config.examples).map(|i| i % families).collect();
            rng.shuffle(&mut labels);
            Ok(labels
                .into_iter()
                .map(|k| CorpusRecord {
                    tree: g.nesting_program(&mut rng, &patterns[k]),
                    label: Some(patterns[k].label()),
                    summary: None,
                })
                .collect())
        }
        LabelRule::LongDependency { classes, filler_len } => {
            let mut labels: Vec<usize> = (0..config.examples).map(|i| i % classes).collect();
            rng.shuffle(&mut labels);
            labels
                .into_iter()
                .map(|k| {
                    let marker = format!("m{k}");
                    let filler = g.forest_of_len(&mut rng, filler_len, config.max_depth - 2)?;
                    let body = AstNode::block(config.block_types[0].clone(), filler);
                    Ok(CorpusRecord {
                        tree: AstNode::block(ROOT_TYPE, vec![AstNode::terminal(MARKER_TYPE, marker.clone()), body]),
                        label: Some(marker),
                        summary: None,
                    })
                })
                .collect()
        }
        LabelRule::Summary => Ok((0..config.examples)
            .map(|_| {
                let tree = g.summary_program(&mut rng);
                let summary = tree
                    .children
                    .iter()
                    .filter(|c| !c.is_leaf())
                    .map(|c| c.node_type.to_lowercase())
                    .collect();
                CorpusRecord {
                    tree,
                    label: None,
                    summary: Some(summary),
                }
            })
            .collect()),
    }
}

/// Longest serialization of a single node with `depth` levels available.
fn node_capacity(depth: usize, fanout: usize) -> usize {
    if depth <= 1 {
        2
    } else {
        3usize.saturating_add(forest_capacity(depth - 1, fanout))
    }
}

fn forest_capacity(depth: usize, fanout: usize) -> usize {
    if depth == 0 {
        0
    } else {
        fanout.saturating_mul(node_capacity(depth, fanout))
    }
}

const SLOT_PREFIX: &str = "\u{0}slot";

fn fill_slots(tpl: &AstNode, fills: &[&String]) -> AstNode {
    let value = tpl.value.as_ref().map(|v| match v.strip_prefix(SLOT_PREFIX) {
        Some(i) => fills[i.parse::<usize>().expect("slot index")].clone(),
        None => v.clone(),
    });
    AstNode {
        node_type: tpl.node_type.clone(),
        value,
        children: tpl.children.iter().map(|c| fill_slots(c, fills)).collect(),
    }
}

#[derive(Debug, Clone)]
struct NestingPattern {
    outer: String,
    inner: String,
    nested: bool,
}

impl NestingPattern {
    fn label(&self) -> String {
        if self.nested {
            format!("{}>{}", self.outer, self.inner)
        } else {
            format!("{};{}", self.outer, self.inner)
        }
    }
}

fn nesting_patterns(blocks: &[String], families: usize) -> Vec<NestingPattern> {
    let mut out = Vec::new();
    // Both orders of one pair come before the next pair, so small family
    // counts still share a token set and differ only in arrangement.
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            for (outer, inner) in [(a, b), (b, a)] {
                for nested in [true, false] {
                    out.push(NestingPattern {
                        outer: outer.clone(),
                        inner: inner.clone(),
                        nested,
                    });
                }
            }
        }
    }
    out.truncate(families);
    out
}

struct Gen<'a> {
    cfg: &'a GeneratorConfig,
}

impl Gen<'_> {
    fn random_leaf(&self, rng: &mut SplitMix64) -> AstNode {
        let t = rng.choose(&self.cfg.leaf_types).clone();
        if rng.bernoulli(0.5) {
            AstNode::terminal(t, rng.choose(&self.cfg.values).clone())
        } else {
            AstNode::leaf(t)
        }
    }

    fn leaves(&self, rng: &mut SplitMix64, lo: usize, hi: usize) -> Vec<AstNode> {
        let n = rng.range_inclusive(lo, hi.max(lo));
        (0..n).map(|_| self.random_leaf(rng)).collect()
    }

    /// Random subtree of at most `depth` levels; blocks get 1..=fanout
    /// children.
    fn random_tree(&self, rng: &mut SplitMix64, depth: usize, block_p: f64) -> AstNode {
        if depth <= 1 || !rng.bernoulli(block_p) {
            return self.random_leaf(rng);
        }
        let n = rng.range_inclusive(1, self.cfg.max_fanout);
        let children = (0..n).map(|_| self.random_tree(rng, depth - 1, block_p)).collect();
        AstNode::block(rng.choose(&self.cfg.block_types).clone(), children)
    }

    fn template(&self, rng: &mut SplitMix64, slots: usize) -> AstNode {
        let tree = {
            let children = (0..self.cfg.max_fanout)
                .map(|_| self.random_tree(rng, self.cfg.max_depth - 1, 0.8))
                .collect();
            AstNode::block(ROOT_TYPE, children)
        };
        self.slot_values(tree, rng, slots)
    }

    fn slot_values(&self, mut node: AstNode, rng: &mut SplitMix64, slots: usize) -> AstNode {
        if node.is_leaf() {
            if node.value.is_some() && slots > 0 && rng.bernoulli(0.5) {
                node.value = Some(format!("{SLOT_PREFIX}{}", rng.below(slots)));
            }
            return node;
        }
        node.children = std::mem::take(&mut node.children)
            .into_iter()
            .map(|c| self.slot_values(c, rng, slots))
            .collect();
        node
    }

    fn nesting_program(&self, rng: &mut SplitMix64, p: &NestingPattern) -> AstNode {
        let f = self.cfg.max_fanout;
        let inner = AstNode::block(p.inner.clone(), self.leaves(rng, 1, f));
        let mut top = if p.nested {
            let mut body = self.leaves(rng, 0, f - 1);
            let at = rng.below(body.len() + 1);
            body.insert(at, inner);
            vec![AstNode::block(p.outer.clone(), body)]
        } else {
            vec![AstNode::block(p.outer.clone(), self.leaves(rng, 1, f)), inner]
        };
        let room = f - top.len();
        if room > 0 && rng.bernoulli(0.5) {
            top.insert(0, self.random_leaf(rng));
        }
        if f > top.len() && rng.bernoulli(0.5) {
            top.push(self.random_leaf(rng));
        }
        AstNode::block(ROOT_TYPE, top)
    }

    fn summary_program(&self, rng: &mut SplitMix64) -> AstNode {
        let n = rng.range_inclusive(1, self.cfg.max_fanout);
        let mut children: Vec<AstNode> = (0..n)
            .map(|_| self.random_tree(rng, self.cfg.max_depth - 1, 0.6))
            .collect();
        if children.iter().all(AstNode::is_leaf) {
            let leaves = self.leaves(rng, 1, self.cfg.max_fanout);
            children[0] = AstNode::block(rng.choose(&self.cfg.block_types).clone(), leaves);
        }
        AstNode::block(ROOT_TYPE, children)
    }

    /// Up to `fanout` nodes whose serializations total exactly `len` tokens.
    fn forest_of_len(&self, rng: &mut SplitMix64, len: usize, depth: usize) -> Result<Vec<AstNode>, AstError> {
        let f = self.cfg.max_fanout;
        let cap = node_capacity(depth, f);
        let min_k = len.div_ceil(cap).max(1);
        let max_k = f.min(len);
        for _ in 0..256 {
            let k = rng.range_inclusive(min_k, max_k.max(min_k));
            if let Some(parts) = split_len(rng, len, k, cap) {
                return parts.into_iter().map(|l| self.node_of_len(rng, l, depth)).collect();
            }
        }
        Err(AstError::Config(format!(
            "could not build a forest of length {len} at depth {depth}"
        )))
    }

    fn node_of_len(&self, rng: &mut SplitMix64, len: usize, depth: usize) -> Result<AstNode, AstError> {
        match len {
            1 => Ok(AstNode::leaf(rng.choose(&self.cfg.leaf_types).clone())),
            2 => Ok(AstNode::terminal(
                rng.choose(&self.cfg.leaf_types).clone(),
                rng.choose(&self.cfg.values).clone(),
            )),
            _ => {
                let children = self.forest_of_len(rng, len - 3, depth - 1)?;
                Ok(AstNode::block(rng.choose(&self.cfg.block_types).clone(), children))
            }
        }
    }
}

/// Splits `len` into `k` parts in `1..=cap`, none equal to 3 (no node
/// serializes to exactly three tokens).
fn split_len(rng: &mut SplitMix64, len: usize, k: usize, cap: usize) -> Option<Vec<usize>> {
    if k == 0 || len < k || len > k * cap {
        return None;
    }
    let mut parts = vec![1; k];
    let mut rest = len - k;
    for (i, part) in parts.iter_mut().enumerate() {
        let room = cap - 1;
        let add = if i + 1 == k {
            rest
        } else {
            let lo = rest.saturating_sub((k - 1 - i) * room);
            rng.range_inclusive(lo, rest.min(room))
        };
        if add > room {
            return None;
        }
        *part += add;
        rest -= add;
    }
    rng.shuffle(&mut parts);
    (!parts.contains(&3)).then_some(parts)
}

use serde::{Deserialize, Serialize};

use super::AstError;

/// One node of a program's abstract syntax tree.
///
/// Nodes with children are code blocks; leaves may carry a terminal payload
/// such as an identifier, literal or operator spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AstNode {
    pub node_type: String,
    pub value: Option<String>,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn leaf(node_type: impl Into<String>) -> Self {
        Self {
            node_type: node_type.into(),
            value: None,
            children: Vec::new(),
        }
    }

    pub fn terminal(node_type: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            node_type: node_type.into(),
            value: Some(value.into()),
            children: Vec::new(),
        }
    }

    pub fn block(node_type: impl Into<String>, children: Vec<AstNode>) -> Self {
        Self {
            node_type: node_type.into(),
            value: None,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(AstNode::node_count).sum::<usize>()
    }

    pub fn non_leaf_count(&self) -> usize {
        usize::from(!self.is_leaf()) + self.children.iter().map(AstNode::non_leaf_count).sum::<usize>()
    }

    /// Nodes on the longest root-to-leaf path; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(AstNode::depth).max().unwrap_or(0)
    }

    pub fn max_fanout(&self) -> usize {
        self.children
            .iter()
            .map(AstNode::max_fanout)
            .max()
            .unwrap_or(0)
            .max(self.children.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawNode::from(self)).expect("tree serialises")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    #[serde(rename = "type")]
    node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    #[serde(default)]
    children: Vec<RawNode>,
}

impl From<&AstNode> for RawNode {
    fn from(n: &AstNode) -> Self {
        RawNode {
            node_type: n.node_type.clone(),
            value: n.value.clone(),
            children: n.children.iter().map(RawNode::from).collect(),
        }
    }
}

impl RawNode {
    fn into_node(self) -> Result<AstNode, AstError> {
        if self.value.is_some() && !self.children.is_empty() {
            return Err(AstError::Schema(format!(
                "node \"{}\" has both a value and children",
                self.node_type
            )));
        }
        let children = self
            .children
            .into_iter()
            .map(RawNode::into_node)
            .collect::<Result<_, _>>()?;
        Ok(AstNode {
            node_type: self.node_type,
            value: self.value,
            children,
        })
    }
}

/// One line of a corpus file: a tree plus optional top-level annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub tree: AstNode,
    pub label: Option<String>,
    pub summary: Option<Vec<String>>,
}

impl CorpusRecord {
    pub fn to_json(&self) -> String {
        let raw = RawRecord {
            node_type: self.tree.node_type.clone(),
            value: self.tree.value.clone(),
            children: self.tree.children.iter().map(RawNode::from).collect(),
            label: self.label.clone(),
            summary: self.summary.as_ref().map(|s| s.join(" ")),
        };
        serde_json::to_string(&raw).expect("record serialises")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(rename = "type")]
    node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    #[serde(default)]
    children: Vec<RawNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<String>,
}

fn map_json_error(text: &str, e: serde_json::Error) -> AstError {
    match e.classify() {
        serde_json::error::Category::Data => AstError::Schema(e.to_string()),
        _ => AstError::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        },
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses one tree document: `{"type": .., "value": .., "children": [..]}`.
pub fn parse_ast_json(text: &str) -> Result<AstNode, AstError> {
    let raw: RawNode = serde_json::from_str(text).map_err(|e| map_json_error(text, e))?;
    raw.into_node()
}

/// Parses one corpus line, which may add `label` and `summary` keys to the
/// root object.
pub fn parse_corpus_record(text: &str) -> Result<CorpusRecord, AstError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| map_json_error(text, e))?;
    let tree = RawNode {
        node_type: raw.node_type,
        value: raw.value,
        children: raw.children,
    }
    .into_node()?;
    Ok(CorpusRecord {
        tree,
        label: raw.label,
        summary: raw.summary.map(|s| s.split_whitespace().map(str::to_string).collect()),
    })
}

/// Parses a newline-delimited corpus; blank lines are skipped. Errors carry
/// the 1-based line number.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>, AstError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_corpus_record(l).map_err(|e| AstError::Line {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_document() {
        let n = parse_ast_json(r#"{"type":"Num","value":"1","children":[]}"#).unwrap();
        assert_eq!(n, AstNode::terminal("Num", "1"));
    }

    #[test]
    fn children_order_is_preserved() {
        let n =
            parse_ast_json(r#"{"type":"A","children":[{"type":"B"},{"type":"C"},{"type":"B","value":"x"}]}"#).unwrap();
        let types: Vec<_> = n.children.iter().map(|c| c.node_type.as_str()).collect();
        assert_eq!(types, ["B", "C", "B"]);
        assert_eq!(n.children[2].value.as_deref(), Some("x"));
    }

    #[test]
    fn malformed_document_reports_offset() {
        let text = "{\"type\": \"A\", \"children\": [}";
        match parse_ast_json(text) {
            Err(AstError::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], "}"),
            other => panic!("expected parse error, got {other:?}"),
        }
        let multi = "{\"type\": \"A\",\n \"children\": [\n  {\"type\" \"B\"}]}";
        match parse_ast_json(multi) {
            Err(AstError::Parse { offset, .. }) => assert_eq!(&multi[offset..offset + 1], "\""),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_and_reference_fields_are_schema_errors() {
        assert!(matches!(
            parse_ast_json(r#"{"type":"A","colour":"red"}"#),
            Err(AstError::Schema(_))
        ));
        // A tree cannot refer back to another node.
        let cyc = r##"{"type":"A","children":[{"type":"B","$ref":"#/"}]}"##;
        assert!(matches!(parse_ast_json(cyc), Err(AstError::Schema(_))));
        let dup = r#"{"type":"A","children":[],"children":[]}"#;
        assert!(matches!(parse_ast_json(dup), Err(AstError::Schema(_))));
    }

    #[test]
    fn value_requires_empty_children() {
        let bad = r#"{"type":"A","value":"v","children":[{"type":"B"}]}"#;
        assert!(matches!(parse_ast_json(bad), Err(AstError::Schema(_))));
    }

    #[test]
    fn label_only_at_top_level() {
        let rec = parse_corpus_record(r#"{"type":"M","label":"k","children":[{"type":"B"}]}"#).unwrap();
        assert_eq!(rec.label.as_deref(), Some("k"));
        assert!(parse_corpus_record(r#"{"type":"M","children":[{"type":"B","label":"k"}]}"#).is_err());
        assert!(parse_ast_json(r#"{"type":"M","label":"k"}"#).is_err());
    }

    #[test]
    fn record_json_round_trips() {
        let rec = CorpusRecord {
            tree: AstNode::block("M", vec![AstNode::terminal("N", "a b")]),
            label: Some("x".into()),
            summary: Some(vec!["loop".into(), "body".into()]),
        };
        assert_eq!(parse_corpus_record(&rec.to_json()).unwrap(), rec);
        let corpus = format!("{}\n\n{}\n", rec.to_json(), rec.to_json());
        assert_eq!(parse_corpus(&corpus).unwrap().len(), 2);
        match parse_corpus("{\"type\":\"A\"}\nnot json") {
            Err(AstError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}

use std::fmt;

use super::{AstError, AstNode};

pub const OPEN: &str = "⟨";
pub const CLOSE: &str = "⟩";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Role of a position in a flattened sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    /// Node-type token.
    NonTerminal,
    /// Terminal payload of the preceding leaf.
    Terminal,
    Open,
    Close,
    Pad,
}

impl TokenKind {
    pub fn is_bracket(self) -> bool {
        matches!(self, TokenKind::Open | TokenKind::Close)
    }

    pub fn tag(self) -> &'static str {
        match self {
            TokenKind::NonTerminal => "NT",
            TokenKind::Terminal => "T",
            TokenKind::Open => "OPEN",
            TokenKind::Close => "CLOSE",
            TokenKind::Pad => "PAD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(text: impl Into<String>, kind: TokenKind) -> Self {
        Self {
            text: text.into(),
            kind,
        }
    }

    pub fn open() -> Self {
        Self::new(OPEN, TokenKind::Open)
    }

    pub fn close() -> Self {
        Self::new(CLOSE, TokenKind::Close)
    }
}

/// Bracketed pre-order flattening of an AST.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn kinds(&self) -> Vec<TokenKind> {
        self.tokens.iter().map(|t| t.kind).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Running bracket depth never drops below zero and ends at zero.
    pub fn is_balanced(&self) -> bool {
        let mut depth = 0i64;
        for t in &self.tokens {
            match t.kind {
                TokenKind::Open => depth += 1,
                TokenKind::Close => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                _ => {}
            }
        }
        depth == 0
    }

    pub fn count(&self, kind: TokenKind) -> usize {
        self.tokens.iter().filter(|t| t.kind == kind).count()
    }

    /// Tab-separated form that keeps kind tags: `N:<type>`, `T:<value>`,
    /// `⟨`, `⟩`, `<pad>`. Token text is escaped with [`escape_field`].
    pub fn to_tagged(&self) -> String {
        self.tokens
            .iter()
            .map(|t| match t.kind {
                TokenKind::NonTerminal => format!("N:{}", escape_field(&t.text)),
                TokenKind::Terminal => format!("T:{}", escape_field(&t.text)),
                TokenKind::Open => OPEN.to_string(),
                TokenKind::Close => CLOSE.to_string(),
                TokenKind::Pad => PAD.to_string(),
            })
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn parse_tagged(text: &str) -> Result<Self, AstError> {
        let text = text.trim_end_matches(['\n', '\r']);
        if text.is_empty() {
            return Ok(Self::default());
        }
        let tokens = text
            .split('\t')
            .enumerate()
            .map(|(i, item)| {
                if item == OPEN {
                    Ok(Token::open())
                } else if item == CLOSE {
                    Ok(Token::close())
                } else if item == PAD {
                    Ok(Token::new(PAD, TokenKind::Pad))
                } else if let Some(s) = item.strip_prefix("N:") {
                    Ok(Token::new(unescape_field(s)?, TokenKind::NonTerminal))
                } else if let Some(s) = item.strip_prefix("T:") {
                    Ok(Token::new(unescape_field(s)?, TokenKind::Terminal))
                } else {
                    Err(AstError::Structure {
                        position: i,
                        message: format!("untagged item {item:?}"),
                    })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { tokens })
    }
}

impl fmt::Display for TokenSequence {
    /// Space-separated token text, the human-readable form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(&t.text)?;
        }
        Ok(())
    }
}

/// Depth-first pre-order flattening. A block emits its type, `⟨`, its
/// children, then `⟩`; a leaf emits its type followed by its value if any.
pub fn serialize_ast(tree: &AstNode) -> TokenSequence {
    let mut tokens = Vec::new();
    // Explicit stack so very deep trees cannot overflow the call stack.
    enum Step<'a> {
        Enter(&'a AstNode),
        Close,
    }
    let mut work = vec![Step::Enter(tree)];
    while let Some(step) = work.pop() {
        match step {
            Step::Close => tokens.push(Token::close()),
            Step::Enter(node) => {
                tokens.push(Token::new(node.node_type.clone(), TokenKind::NonTerminal));
                if node.is_leaf() {
                    if let Some(v) = &node.value {
                        tokens.push(Token::new(v.clone(), TokenKind::Terminal));
                    }
                } else {
                    tokens.push(Token::open());
                    work.push(Step::Close);
                    work.extend(node.children.iter().rev().map(Step::Enter));
                }
            }
        }
    }
    TokenSequence { tokens }
}

/// Inverse of [`serialize_ast`] on well-formed input.
pub fn deserialize_sequence(seq: &TokenSequence) -> Result<AstNode, AstError> {
    let toks = &seq.tokens;
    let err = |position: usize, message: &str| AstError::Structure {
        position,
        message: message.to_string(),
    };
    // Each frame is a block under construction.
    let mut frames: Vec<AstNode> = Vec::new();
    let mut root: Option<AstNode> = None;
    let mut i = 0;
    while i < toks.len() {
        let tok = &toks[i];
        if root.is_some() {
            return Err(err(i, "tokens after the root node ended"));
        }
        let finished = match tok.kind {
            TokenKind::NonTerminal => {
                let mut node = AstNode::leaf(tok.text.clone());
                match toks.get(i + 1).map(|t| t.kind) {
                    Some(TokenKind::Open) => {
                        frames.push(node);
                        i += 2;
                        continue;
                    }
                    Some(TokenKind::Terminal) => {
                        node.value = Some(toks[i + 1].text.clone());
                        i += 2;
                    }
                    _ => i += 1,
                }
                node
            }
            TokenKind::Close => {
                let node = frames
                    .pop()
                    .ok_or_else(|| err(i, "close bracket without a matching open"))?;
                if node.children.is_empty() {
                    return Err(err(i, "empty block"));
                }
                i += 1;
                node
            }
            TokenKind::Open => return Err(err(i, "open bracket not preceded by a node type")),
            TokenKind::Terminal => return Err(err(i, "terminal value not preceded by a leaf type")),
            TokenKind::Pad => return Err(err(i, "padding inside a sequence")),
        };
        match frames.last_mut() {
            Some(parent) => parent.children.push(finished),
            None => root = Some(finished),
        }
    }
    if !frames.is_empty() {
        return Err(err(toks.len(), "unclosed block at end of sequence"));
    }
    root.ok_or_else(|| err(0, "empty sequence"))
}

/// Escapes `\`, tab, newline and carriage return so a token fits in one
/// tab-separated field.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Result<String, AstError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(AstError::Schema(format!(
                    "bad escape sequence \\{}",
                    other.map_or(String::new(), String::from)
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf() {
        let seq = serialize_ast(&AstNode::terminal("Num", "3"));
        assert_eq!(seq.texts(), ["Num", "3"]);
        assert_eq!(seq.kinds(), [TokenKind::NonTerminal, TokenKind::Terminal]);
        assert_eq!(deserialize_sequence(&seq).unwrap(), AstNode::terminal("Num", "3"));
    }

    #[test]
    fn structure_errors_name_positions() {
        let t = |s: &str| TokenSequence::parse_tagged(s).unwrap();
        let cases = [
            ("N:A\t⟨\tN:B", 3),
            ("N:A\t⟩", 1),
            ("⟨", 0),
            ("T:x", 0),
            ("N:A\t⟨\t⟩", 2),
            ("N:A\tN:B", 1),
            ("N:A\t⟨\tN:B\t⟩\t⟩", 4),
        ];
        for (text, pos) in cases {
            match deserialize_sequence(&t(text)) {
                Err(AstError::Structure { position, .. }) => assert_eq!(position, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(deserialize_sequence(&TokenSequence::default()).is_err());
    }

    #[test]
    fn tagged_form_round_trips_awkward_text() {
        let tree = AstNode::block(
            "Str",
            vec![
                AstNode::terminal("Lit", "a\tb\\n\n"),
                AstNode::terminal("Lit", "⟨"),
                AstNode::leaf("N:x"),
            ],
        );
        let seq = serialize_ast(&tree);
        let back = TokenSequence::parse_tagged(&seq.to_tagged()).unwrap();
        assert_eq!(back, seq);
        assert_eq!(deserialize_sequence(&back).unwrap(), tree);
    }

    #[test]
    fn bad_escape_and_untagged_items_fail() {
        assert!(TokenSequence::parse_tagged("N:a\\q").is_err());
        assert!(TokenSequence::parse_tagged("N:a\tplain").is_err());
    }

    #[test]
    fn balance_detection() {
        let t = |s: &str| TokenSequence::parse_tagged(s).unwrap();
        assert!(t("N:A\t⟨\tN:B\t⟩").is_balanced());
        assert!(!t("N:A\t⟨\tN:B").is_balanced());
        assert!(!t("⟩\t⟨").is_balanced());
    }
}

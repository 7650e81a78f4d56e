use std::collections::HashMap;

use super::sequence::{escape_field, unescape_field, Token, TokenKind, TokenSequence, CLOSE, OPEN, PAD, UNK};
use super::AstError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const OPEN_ID: u32 = 2;
pub const CLOSE_ID: u32 = 3;

/// Reserved rows of a code vocabulary, in id order.
pub const CODE_RESERVED: [&str; 4] = [PAD, UNK, OPEN, CLOSE];
/// Reserved rows of a summary vocabulary: pad, unknown, start, end.
pub const SUMMARY_RESERVED: [&str; 4] = [PAD, UNK, "<s>", "</s>"];
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

/// Closed vocabulary with four reserved ids followed by corpus tokens in
/// descending frequency (ties by byte-wise string order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    max_size: usize,
}

impl Vocab {
    /// Ranks `tokens` by frequency and keeps the top `max_size - 4`.
    pub fn from_counts<'a>(
        tokens: impl IntoIterator<Item = &'a str>,
        reserved: [&str; 4],
        max_size: usize,
    ) -> Result<Self, AstError> {
        if max_size < 5 {
            return Err(AstError::Contract(format!("vocabulary max_size {max_size} is below 5")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut seen_any = false;
        for t in tokens {
            seen_any = true;
            if !reserved.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(AstError::Contract(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - reserved.len());
        let id_to_token: Vec<String> = reserved
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Ok(Self::from_tokens(id_to_token, max_size))
    }

    fn from_tokens(id_to_token: Vec<String>, max_size: usize) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            id_to_token,
            token_to_id,
            max_size,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// `token<TAB>id` per line, reserved rows first. Tokens are escaped.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("#max_size\t{}\n", self.max_size);
        for (i, t) in self.id_to_token.iter().enumerate() {
            out.push_str(&escape_field(t));
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse_file(text: &str, reserved: [&str; 4]) -> Result<Self, AstError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| AstError::Schema("empty vocab file".into()))?;
        let max_size = header
            .strip_prefix("#max_size\t")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| AstError::Schema("vocab file lacks a #max_size header".into()))?;
        let mut id_to_token = Vec::new();
        for (row, line) in lines.enumerate() {
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| AstError::Schema(format!("vocab row {row}: expected token<TAB>id")))?;
            let id: usize = id
                .parse()
                .map_err(|_| AstError::Schema(format!("vocab row {row}: bad id {id:?}")))?;
            if id != row {
                return Err(AstError::Schema(format!("vocab row {row}: id {id} out of order")));
            }
            id_to_token.push(unescape_field(tok)?);
        }
        if id_to_token.len() < reserved.len() || id_to_token[..reserved.len()] != reserved.map(String::from) {
            return Err(AstError::Schema(
                "vocab file does not start with the reserved rows".into(),
            ));
        }
        if id_to_token.len() > max_size {
            return Err(AstError::Schema("vocab file exceeds its max_size".into()));
        }
        let v = Self::from_tokens(id_to_token, max_size);
        if v.token_to_id.len() != v.id_to_token.len() {
            return Err(AstError::Schema("vocab file repeats a token".into()));
        }
        Ok(v)
    }
}

/// Builds the code vocabulary over node-type and terminal tokens. Brackets
/// and padding always take the reserved ids.
pub fn build_vocab(corpus: &[TokenSequence], max_size: usize) -> Result<Vocab, AstError> {
    if corpus.is_empty() {
        return Err(AstError::Contract(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let tokens = corpus
        .iter()
        .flat_map(|s| s.tokens.iter())
        .filter(|t| matches!(t.kind, TokenKind::NonTerminal | TokenKind::Terminal))
        .map(|t| t.text.as_str());
    Vocab::from_counts(tokens, CODE_RESERVED, max_size)
}

/// Fixed-length id encoding of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub ids: Vec<u32>,
    pub kinds: Vec<TokenKind>,
    /// Number of non-padding positions.
    pub len: usize,
    pub truncated: bool,
}

impl EncodedSequence {
    /// The non-padding prefix, without any fixed-length tail.
    pub fn unpadded(&self) -> Self {
        Self {
            ids: self.ids[..self.len].to_vec(),
            kinds: self.kinds[..self.len].to_vec(),
            len: self.len,
            truncated: self.truncated,
        }
    }
}

/// Maps tokens to ids (out-of-vocabulary to UNK), keeps at most `max_len`
/// positions and right-pads with PAD up to `max_len`.
pub fn encode_sequence(seq: &TokenSequence, vocab: &Vocab, max_len: usize) -> EncodedSequence {
    let len = seq.len().min(max_len);
    let mut ids = Vec::with_capacity(max_len);
    let mut kinds = Vec::with_capacity(max_len);
    for t in &seq.tokens[..len] {
        ids.push(token_id(t, vocab));
        kinds.push(t.kind);
    }
    ids.resize(max_len, PAD_ID);
    kinds.resize(max_len, TokenKind::Pad);
    EncodedSequence {
        ids,
        kinds,
        len: seq.tokens[..len].iter().filter(|t| t.kind != TokenKind::Pad).count(),
        truncated: seq.len() > max_len,
    }
}

fn token_id(t: &Token, vocab: &Vocab) -> u32 {
    match t.kind {
        TokenKind::Open => OPEN_ID,
        TokenKind::Close => CLOSE_ID,
        TokenKind::Pad => PAD_ID,
        _ => vocab.id(&t.text),
    }
}

/// Inverse of [`encode_sequence`] over the non-padding prefix.
pub fn decode_sequence(enc: &EncodedSequence, vocab: &Vocab) -> TokenSequence {
    TokenSequence {
        tokens: enc
            .ids
            .iter()
            .zip(&enc.kinds)
            .filter(|(_, k)| **k != TokenKind::Pad)
            .map(|(&id, &kind)| Token::new(vocab.token(id).unwrap_or(UNK), kind))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(items: &[(&str, TokenKind)]) -> TokenSequence {
        TokenSequence {
            tokens: items.iter().map(|(t, k)| Token::new(*t, *k)).collect(),
        }
    }

    fn nts(words: &[&str]) -> TokenSequence {
        seq(&words.iter().map(|w| (*w, TokenKind::NonTerminal)).collect::<Vec<_>>())
    }

    #[test]
    fn frequency_cutoff() {
        let v = build_vocab(&[nts(&["A", "A", "B"])], 5).unwrap();
        assert_eq!(v.tokens(), [PAD, UNK, OPEN, CLOSE, "A"]);
        assert_eq!(v.id("B"), UNK_ID);
    }

    #[test]
    fn ties_keep_the_lexicographically_smaller() {
        let v = build_vocab(&[nts(&["C", "B", "A", "A"])], 6).unwrap();
        assert_eq!(&v.tokens()[4..], ["A", "B"]);
        assert!(!v.contains("C"));
    }

    #[test]
    fn contract_errors() {
        assert!(build_vocab(&[], 10).is_err());
        assert!(build_vocab(&[nts(&["A"])], 4).is_err());
    }

    #[test]
    fn brackets_use_reserved_ids() {
        let s = seq(&[
            ("A", TokenKind::NonTerminal),
            (OPEN, TokenKind::Open),
            ("x", TokenKind::Terminal),
            (CLOSE, TokenKind::Close),
        ]);
        let v = build_vocab(std::slice::from_ref(&s), 10).unwrap();
        let e = encode_sequence(&s, &v, 6);
        assert_eq!(e.ids[1], OPEN_ID);
        assert_eq!(e.ids[3], CLOSE_ID);
        assert_eq!(&e.ids[4..], [PAD_ID, PAD_ID]);
        assert_eq!(e.len, 4);
        assert!(!e.truncated);
        assert_eq!(decode_sequence(&e, &v), s);
    }

    #[test]
    fn padding_and_truncation() {
        let v = build_vocab(&[nts(&["A"])], 10).unwrap();
        let e = encode_sequence(&nts(&["A"]), &v, 4);
        assert_eq!(e.ids, [4, PAD_ID, PAD_ID, PAD_ID]);
        let long = nts(&vec!["A"; 500]);
        let e = encode_sequence(&long, &v, 400);
        assert_eq!(e.ids.len(), 400);
        assert_eq!(e.len, 400);
        assert!(e.truncated);
    }

    #[test]
    fn vocab_file_round_trip_and_rejects() {
        let v = build_vocab(&[nts(&["x\ty", "b", "b", "\\"])], 10).unwrap();
        let text = v.to_file_string();
        assert_eq!(Vocab::parse_file(&text, CODE_RESERVED).unwrap(), v);
        assert!(Vocab::parse_file("", CODE_RESERVED).is_err());
        assert!(Vocab::parse_file("#max_size\t9\nA\t0\n", CODE_RESERVED).is_err());
        let swapped = text.replace("<unk>\t1", "<unk>\t7");
        assert!(Vocab::parse_file(&swapped, CODE_RESERVED).is_err());
        let dup = format!("{text}b\t{}\n", v.len());
        assert!(Vocab::parse_file(&dup, CODE_RESERVED).is_err());
    }
}

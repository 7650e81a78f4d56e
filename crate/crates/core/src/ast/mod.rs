//! Program trees, their bracketed pre-order flattening, vocabularies and
//! synthetic corpora.

mod node;
mod sequence;
pub mod synth;
mod vocab;

pub use node::{parse_ast_json, parse_corpus, parse_corpus_record, AstNode, CorpusRecord};
pub use sequence::{
    deserialize_sequence, escape_field, serialize_ast, unescape_field, Token, TokenKind, TokenSequence, CLOSE, OPEN,
    PAD, UNK,
};
pub use synth::{generate_synthetic_corpus, GeneratorConfig, LabelRule};
pub use vocab::{
    build_vocab, decode_sequence, encode_sequence, EncodedSequence, Vocab, BOS_ID, CLOSE_ID, CODE_RESERVED, EOS_ID,
    OPEN_ID, PAD_ID, SUMMARY_RESERVED, UNK_ID,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("structure error at position {position}: {message}")]
    Structure { position: usize, message: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<AstError>,
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("generator config error: {0}")]
    Config(String),
}

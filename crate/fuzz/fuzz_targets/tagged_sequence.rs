#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::ast::{deserialize_sequence, serialize_ast, TokenSequence};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(seq) = TokenSequence::parse_tagged(text) else {
        return;
    };
    assert_eq!(TokenSequence::parse_tagged(&seq.to_tagged()).as_ref(), Ok(&seq));
    if let Ok(tree) = deserialize_sequence(&seq) {
        assert_eq!(serialize_ast(&tree), seq);
    }
});

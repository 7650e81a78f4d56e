#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::ast::{deserialize_sequence, parse_ast_json, serialize_ast};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tree) = parse_ast_json(text) else { return };
    assert_eq!(parse_ast_json(&tree.to_json()).as_ref(), Ok(&tree));
    assert_eq!(deserialize_sequence(&serialize_ast(&tree)).as_ref(), Ok(&tree));
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::ast::{Vocab, CODE_RESERVED};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(vocab) = Vocab::parse_file(text, CODE_RESERVED) else {
        return;
    };
    assert_eq!(
        Vocab::parse_file(&vocab.to_file_string(), CODE_RESERVED).as_ref(),
        Ok(&vocab)
    );
});

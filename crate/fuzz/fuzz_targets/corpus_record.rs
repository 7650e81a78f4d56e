#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::ast::parse_corpus_record;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = parse_corpus_record(text) else { return };
    assert_eq!(parse_corpus_record(&record.to_json()).as_ref(), Ok(&record));
});

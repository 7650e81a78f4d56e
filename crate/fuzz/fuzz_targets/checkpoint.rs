#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::harness::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(ck) = Checkpoint::decode(data) else { return };
    let bytes = ck.encode();
    let again = Checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(again.encode(), bytes);
});

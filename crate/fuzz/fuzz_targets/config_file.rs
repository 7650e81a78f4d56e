#![no_main]

use libfuzzer_sys::fuzz_target;
use treestack::harness::{parse_config_file, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pairs) = parse_config_file(text) else { return };
    let Ok(cfg) = RunConfig::resolve(&pairs, &[]) else {
        return;
    };
    let again = parse_config_file(&cfg.to_file_string()).expect("written config parses");
    assert_eq!(RunConfig::resolve(&again, &[]).as_ref().ok(), Some(&cfg));
});

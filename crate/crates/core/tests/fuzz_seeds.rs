//! Replays the checked-in fuzz seed corpora through the fuzz targets' own
//! round-trip properties, plus byte-level mutations of every seed.

use std::fs;
use std::path::PathBuf;

use treestack::ast::{
    deserialize_sequence, parse_ast_json, parse_corpus_record, serialize_ast, TokenSequence, Vocab, CODE_RESERVED,
};
use treestack::harness::{parse_config_file, Checkpoint, RunConfig};
use treestack::rng::SplitMix64;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| fs::read(f).unwrap()).collect()
}

/// Each seed unchanged, then truncated, bit-flipped and byte-dropped variants.
fn inputs(target: &str) -> Vec<Vec<u8>> {
    let mut rng = SplitMix64::new(0xf022);
    let mut out = Vec::new();
    for seed in seeds(target) {
        out.push(seed.clone());
        for _ in 0..64 {
            let mut m = seed.clone();
            if m.is_empty() {
                break;
            }
            let at = rng.below(m.len());
            match rng.below(3) {
                0 => m.truncate(at),
                1 => m[at] ^= 1 << rng.below(8),
                _ => {
                    m.remove(at);
                }
            }
            out.push(m);
        }
    }
    out
}

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

#[test]
fn ast_json_seeds() {
    let mut parsed = 0;
    for data in inputs("ast_json") {
        let Some(Ok(tree)) = text(&data).map(parse_ast_json) else {
            continue;
        };
        parsed += 1;
        assert_eq!(parse_ast_json(&tree.to_json()).as_ref(), Ok(&tree));
        assert_eq!(deserialize_sequence(&serialize_ast(&tree)).as_ref(), Ok(&tree));
    }
    assert!(parsed >= seeds("ast_json").len());
}

#[test]
fn corpus_record_seeds() {
    for data in inputs("corpus_record") {
        let Some(Ok(rec)) = text(&data).map(parse_corpus_record) else {
            continue;
        };
        assert_eq!(parse_corpus_record(&rec.to_json()).as_ref(), Ok(&rec));
    }
}

#[test]
fn tagged_sequence_seeds() {
    for data in inputs("tagged_sequence") {
        let Some(Ok(seq)) = text(&data).map(TokenSequence::parse_tagged) else {
            continue;
        };
        assert_eq!(TokenSequence::parse_tagged(&seq.to_tagged()).as_ref(), Ok(&seq));
        if let Ok(tree) = deserialize_sequence(&seq) {
            assert_eq!(serialize_ast(&tree), seq);
        }
    }
}

#[test]
fn vocab_file_seeds() {
    for data in inputs("vocab_file") {
        let Some(Ok(v)) = text(&data).map(|t| Vocab::parse_file(t, CODE_RESERVED)) else {
            continue;
        };
        assert_eq!(Vocab::parse_file(&v.to_file_string(), CODE_RESERVED).as_ref(), Ok(&v));
    }
}

#[test]
fn checkpoint_seeds() {
    let originals = seeds("checkpoint");
    for data in inputs("checkpoint") {
        let decoded = Checkpoint::decode(&data);
        if originals.contains(&data) {
            assert!(decoded.is_ok());
        }
        let Ok(ck) = decoded else { continue };
        let bytes = ck.encode();
        assert_eq!(Checkpoint::decode(&bytes).unwrap().encode(), bytes);
    }
}

#[test]
fn config_file_seeds() {
    for data in inputs("config_file") {
        let Some(Ok(pairs)) = text(&data).map(parse_config_file) else {
            continue;
        };
        let Ok(cfg) = RunConfig::resolve(&pairs, &[]) else {
            continue;
        };
        let again = parse_config_file(&cfg.to_file_string()).unwrap();
        assert_eq!(RunConfig::resolve(&again, &[]).ok().as_ref(), Some(&cfg));
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn treestack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treestack"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = treestack(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn serialize_prints_bracketed_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("while.json");
    fs::write(
        &input,
        r#"{"type":"Module","children":[{"type":"While","children":[{"type":"Name","value":"i"},{"type":"Num"}]}]}"#,
    )
    .unwrap();
    assert_eq!(
        ok(&["serialize", "--input", p(&input)]),
        "Module ⟨ While ⟨ Name i Num ⟩ ⟩\n"
    );
    let tagged = ok(&["serialize", "--input", p(&input), "--tagged"]);
    assert_eq!(tagged, "N:Module\t⟨\tN:While\t⟨\tN:Name\tT:i\tN:Num\t⟩\t⟩\n");
}

#[test]
fn gen_corpus_is_seeded() {
    let a = ok(&["gen-corpus", "--rule", "nesting", "--examples", "5", "--seed", "4"]);
    let b = ok(&["gen-corpus", "--rule", "nesting", "--examples", "5", "--seed", "4"]);
    let c = ok(&["gen-corpus", "--rule", "nesting", "--examples", "5", "--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn train_evaluate_complete_verify() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.jsonl");
    let run = dir.path().join("run");
    ok(&[
        "gen-corpus",
        "--rule",
        "completion",
        "--examples",
        "12",
        "--depth",
        "3",
        "-o",
        p(&data),
    ]);
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "# tiny\ntask = completion\nhidden_size = 6\nembedding_size = 6\nepochs = 2\n",
    )
    .unwrap();
    let log = ok(&[
        "train",
        "--config",
        p(&cfg),
        "--train",
        p(&data),
        "--out-dir",
        p(&run),
        "--batch-size",
        "4",
    ]);
    assert!(log.contains("epoch=2") && log.contains("best_epoch="), "{log}");
    for f in ["checkpoint.bin", "train.log", "config.txt", "vocab.txt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(fs::read_to_string(run.join("config.txt"))
        .unwrap()
        .contains("batch_size = 4"));

    let ck = run.join("checkpoint.bin");
    let report = ok(&[
        "evaluate",
        "--checkpoint",
        p(&ck),
        "--test",
        p(&data),
        "--out-dir",
        p(&run),
    ]);
    assert!(report.contains("metric=accuracy"), "{report}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(json.as_array().is_some_and(|a| !a.is_empty()));

    let tree = dir.path().join("tree.json");
    let first = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    let record: serde_json::Value = serde_json::from_str(&first).unwrap();
    let tree_json = record.get("tree").cloned().unwrap_or(record);
    fs::write(&tree, tree_json.to_string()).unwrap();
    let suggestions = ok(&["complete", "--checkpoint", p(&ck), "--input", p(&tree), "-k", "3"]);
    assert_eq!(suggestions.lines().count(), 3);
    assert!(suggestions.starts_with("1\t"));

    assert!(ok(&["verify-checkpoint", "--checkpoint", p(&ck)]).contains("bitwise equal"));
}

#[test]
fn ngram_baseline_reports_slices() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c.jsonl");
    ok(&["gen-corpus", "--rule", "completion", "--examples", "10", "-o", p(&data)]);
    let out = ok(&["ngram", "--train", p(&data), "--test", p(&data), "-n", "2"]);
    assert!(out.contains("slice=NT") && out.contains("metric=mrr@10"), "{out}");
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c.jsonl");
    ok(&["gen-corpus", "--rule", "completion", "--examples", "4", "-o", p(&data)]);
    let out = p(&dir.path().join("o")).to_string();
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "hiden_size = 3\n").unwrap();
    let code = |args: &[&str]| treestack(args).status.code();
    assert_eq!(
        code(&["train", "--config", p(&bad_cfg), "--train", p(&data), "--out-dir", &out]),
        Some(2)
    );
    assert_eq!(
        code(&["train", "--train", p(&data), "--out-dir", &out, "--learning_rate", "-1"]),
        Some(2)
    );
    assert_eq!(
        code(&["train", "--train", "/nonexistent.jsonl", "--out-dir", &out]),
        Some(3)
    );
    let garbage = dir.path().join("g.bin");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&["verify-checkpoint", "--checkpoint", p(&garbage)]), Some(3));
    assert_eq!(
        code(&["evaluate", "--checkpoint", p(&garbage), "--test", p(&data)]),
        Some(3)
    );
}

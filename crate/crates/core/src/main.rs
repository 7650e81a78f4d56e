use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use treestack::ast::{
    generate_synthetic_corpus, parse_ast_json, parse_corpus, serialize_ast, CorpusRecord, GeneratorConfig, LabelRule,
};
use treestack::harness::{
    compare_alphas, complete, encode_records, evaluate, evaluate_ngram, parse_config_file, train, Checkpoint,
    HarnessError, NgramModel, RunConfig, TrainOutcome, Vocabularies,
};
use treestack::metrics::{reports_to_json, reports_to_text};

#[derive(Parser)]
#[command(
    name = "treestack",
    version,
    about = "LSTM with a block-scoped hidden-state stack, over bracketed program trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the best-validation checkpoint.
    Train(Box<TrainArgs>),
    /// Score a checkpoint on a corpus.
    Evaluate(EvaluateArgs),
    /// Suggest next tokens after a partial program.
    Complete(CompleteArgs),
    /// Print the bracketed sequence of every tree in a file.
    Serialize(SerializeArgs),
    /// Write a synthetic corpus.
    GenCorpus(GenArgs),
    /// Train and score an n-gram next-token baseline.
    Ngram(NgramArgs),
    /// Reload a checkpoint and compare its stored probe output bit for bit.
    VerifyCheckpoint(VerifyArgs),
}

/// One optional flag per config key, named exactly as the key.
#[derive(Args, Default)]
struct ConfigFlags {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    /// fc, maxpool or summarization; `train` also accepts `all`.
    #[arg(long)]
    alpha: Option<String>,
    /// `false` disables the stack (vanilla LSTM).
    #[arg(long)]
    stack: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long = "hidden_size", visible_alias = "hidden-size")]
    hidden_size: Option<String>,
    #[arg(long = "embedding_size", visible_alias = "embedding-size")]
    embedding_size: Option<String>,
    #[arg(long = "vocab_size", visible_alias = "vocab-size")]
    vocab_size: Option<String>,
    #[arg(long = "max_len", visible_alias = "max-len")]
    max_len: Option<String>,
    #[arg(long = "summary_vocab_size", visible_alias = "summary-vocab-size")]
    summary_vocab_size: Option<String>,
    #[arg(long = "summary_embedding_size", visible_alias = "summary-embedding-size")]
    summary_embedding_size: Option<String>,
    #[arg(long = "summary_len", visible_alias = "summary-len")]
    summary_len: Option<String>,
    #[arg(long = "attention_size", visible_alias = "attention-size")]
    attention_size: Option<String>,
    #[arg(long = "batch_size", visible_alias = "batch-size")]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long = "learning_rate", visible_alias = "learning-rate")]
    learning_rate: Option<String>,
    #[arg(long = "clip_norm", visible_alias = "clip-norm")]
    clip_norm: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// strict or lenient, for training.
    #[arg(long)]
    mode: Option<String>,
    /// strict or lenient, for evaluation.
    #[arg(long = "eval_mode", visible_alias = "eval-mode")]
    eval_mode: Option<String>,
    #[arg(long = "stop_at_metric", visible_alias = "stop-at-metric")]
    stop_at_metric: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("task", &self.task),
            ("alpha", &self.alpha),
            ("stack", &self.stack),
            ("layers", &self.layers),
            ("hidden_size", &self.hidden_size),
            ("embedding_size", &self.embedding_size),
            ("vocab_size", &self.vocab_size),
            ("max_len", &self.max_len),
            ("summary_vocab_size", &self.summary_vocab_size),
            ("summary_embedding_size", &self.summary_embedding_size),
            ("summary_len", &self.summary_len),
            ("attention_size", &self.attention_size),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("clip_norm", &self.clip_norm),
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("eval_mode", &self.eval_mode),
            ("stop_at_metric", &self.stop_at_metric),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn file_pairs(&self) -> Result<Vec<(String, String)>, HarnessError> {
        match &self.config {
            Some(p) => parse_config_file(&read(p)?),
            None => Ok(Vec::new()),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigFlags,
    /// Training corpus (one JSON tree per line).
    #[arg(long)]
    train: PathBuf,
    /// Validation corpus; defaults to the training corpus.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long = "out-dir", alias = "out_dir")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Bracket policy; defaults to the checkpoint's `eval_mode`.
    #[arg(long = "eval_mode", visible_alias = "eval-mode", alias = "mode")]
    eval_mode: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Also write report.txt, report.json and predictions.txt here.
    #[arg(long = "out-dir", alias = "out_dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A single JSON tree.
    #[arg(long)]
    input: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Keep only the first N serialized tokens (default: drop trailing closings).
    #[arg(long)]
    keep: Option<usize>,
}

#[derive(Args)]
struct SerializeArgs {
    /// JSON tree or corpus file.
    #[arg(long)]
    input: PathBuf,
    /// Tab-separated kind-tagged form instead of plain tokens.
    #[arg(long)]
    tagged: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Completion,
    Nesting,
    LongDependency,
    Summary,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    rule: Rule,
    #[arg(long, default_value_t = 100)]
    examples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    fanout: usize,
    #[arg(long, default_value_t = 4)]
    templates: usize,
    #[arg(long, default_value_t = 1)]
    slots: usize,
    #[arg(long, default_value_t = 4)]
    families: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long = "filler-len", alias = "filler_len", default_value_t = 100)]
    filler_len: usize,
    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct NgramArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(short, long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long = "out-dir", alias = "out_dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn mkdir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn corpus(path: &Path) -> Result<Vec<CorpusRecord>, HarnessError> {
    Ok(parse_corpus(&read(path)?)?)
}

fn write_run(dir: &Path, cfg: &RunConfig, vocabs: &Vocabularies, out: &TrainOutcome) -> Result<(), HarnessError> {
    mkdir(dir)?;
    out.best.save(&dir.join("checkpoint.bin"))?;
    write(&dir.join("train.log"), out.log_text())?;
    write(&dir.join("config.txt"), cfg.to_file_string())?;
    write(&dir.join("vocab.txt"), vocabs.code.to_file_string())?;
    if let Some(s) = &vocabs.summary {
        write(&dir.join("summary_vocab.txt"), s.to_file_string())?;
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), HarnessError> {
    let all = args
        .config
        .alpha
        .as_deref()
        .is_some_and(|a| a.eq_ignore_ascii_case("all"));
    let mut flags = args.config.pairs();
    if all {
        flags.retain(|(k, _)| k != "alpha");
    }
    let cfg = RunConfig::resolve(&args.config.file_pairs()?, &flags)?;
    let train_recs = corpus(&args.train)?;
    let valid_recs = match &args.valid {
        Some(p) => corpus(p)?,
        None => train_recs.clone(),
    };
    let vocabs = Vocabularies::build(&cfg, &train_recs)?;
    let train_set = encode_records(&cfg, &vocabs, &train_recs, true)?;
    let valid_set = encode_records(&cfg, &vocabs, &valid_recs, false)?;
    if all {
        let (ranking, runs) = compare_alphas(&cfg, &vocabs, &train_set, &valid_set)?;
        for (alpha, out) in &runs {
            let run_cfg = RunConfig {
                alpha: *alpha,
                ..cfg.clone()
            };
            write_run(&args.out_dir.join(alpha.as_str()), &run_cfg, &vocabs, out)?;
        }
        write(&args.out_dir.join("alpha_ranking.txt"), ranking.to_text())?;
        print!("{}", ranking.to_text());
    } else {
        let out = train(&cfg, &vocabs, &train_set, &valid_set)?;
        write_run(&args.out_dir, &cfg, &vocabs, &out)?;
        print!("{}", out.log_text());
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), HarnessError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut cfg = ck.config.clone();
    if let Some(m) = &args.eval_mode {
        cfg.set("eval_mode", m)?;
    }
    let net = ck.network()?;
    let test = encode_records(&cfg, &ck.vocabs, &corpus(&args.test)?, false)?;
    let eval = evaluate(&net, &cfg, &ck.vocabs, &test)?;
    let text = reports_to_text(&eval.reports);
    let json = reports_to_json(&eval.reports);
    if let Some(dir) = &args.out_dir {
        mkdir(dir)?;
        write(&dir.join("report.txt"), &text)?;
        write(&dir.join("report.json"), &json)?;
        write(&dir.join("predictions.txt"), eval.predictions.join("\n") + "\n")?;
    }
    match args.format {
        Format::Text => print!("{text}"),
        Format::Json => println!("{json}"),
    }
    Ok(())
}

fn run_complete(args: CompleteArgs) -> Result<(), HarnessError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let tree = parse_ast_json(read(&args.input)?.trim())?;
    let net = ck.network()?;
    for (i, (tok, p)) in complete(&net, &ck.vocabs, &tree, args.k, args.keep)?.iter().enumerate() {
        println!("{}\t{tok}\t{p}", i + 1);
    }
    Ok(())
}

fn run_serialize(args: SerializeArgs) -> Result<(), HarnessError> {
    for rec in corpus(&args.input)? {
        let seq = serialize_ast(&rec.tree);
        if args.tagged {
            println!("{}", seq.to_tagged());
        } else {
            println!("{seq}");
        }
    }
    Ok(())
}

fn run_gen(args: GenArgs) -> Result<(), HarnessError> {
    let rule = match args.rule {
        Rule::Completion => LabelRule::Completion {
            templates: args.templates,
            slots: args.slots,
        },
        Rule::Nesting => LabelRule::NestingFamily {
            families: args.families,
        },
        Rule::LongDependency => LabelRule::LongDependency {
            classes: args.classes,
            filler_len: args.filler_len,
        },
        Rule::Summary => LabelRule::Summary,
    };
    let cfg = GeneratorConfig::with_rule(rule, args.examples, args.depth, args.fanout);
    let text: String = generate_synthetic_corpus(&cfg, args.seed)?
        .iter()
        .map(|r| r.to_json() + "\n")
        .collect();
    match &args.output {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_ngram(args: NgramArgs) -> Result<(), HarnessError> {
    let seqs =
        |p: &Path| -> Result<Vec<_>, HarnessError> { Ok(corpus(p)?.iter().map(|r| serialize_ast(&r.tree)).collect()) };
    let model = NgramModel::train(&seqs(&args.train)?, args.n)?;
    let eval = evaluate_ngram(&model, &seqs(&args.test)?)?;
    let text = reports_to_text(&eval.reports);
    let json = reports_to_json(&eval.reports);
    if let Some(dir) = &args.out_dir {
        mkdir(dir)?;
        write(&dir.join("report.txt"), &text)?;
        write(&dir.join("report.json"), &json)?;
        write(&dir.join("predictions.txt"), eval.predictions.join("\n") + "\n")?;
    }
    match args.format {
        Format::Text => print!("{text}"),
        Format::Json => println!("{json}"),
    }
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<(), HarnessError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let report = ck.verify()?;
    match report.first_divergence {
        None => {
            println!("probe outputs: {} bitwise equal", report.outputs);
            Ok(())
        }
        Some((i, stored, fresh)) => Err(HarnessError::Numeric(format!(
            "probe diverges at output {i}: stored {stored:e}, recomputed {fresh:e}"
        ))),
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Train(a) => run_train(*a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Complete(a) => run_complete(a),
        Command::Serialize(a) => run_serialize(a),
        Command::GenCorpus(a) => run_gen(a),
        Command::Ngram(a) => run_ngram(a),
        Command::VerifyCheckpoint(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

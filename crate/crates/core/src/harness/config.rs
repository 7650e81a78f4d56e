use std::fmt;
use std::str::FromStr;

use super::HarnessError;
use crate::model::{AlphaKind, StackMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Completion,
    Classification,
    Summarization,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Completion => "completion",
            Task::Classification => "classification",
            Task::Summarization => "summarization",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "completion" => Ok(Task::Completion),
            "classification" => Ok(Task::Classification),
            "summarization" => Ok(Task::Summarization),
            _ => Err(format!(
                "unknown task {s:?} (expected completion, classification or summarization)"
            )),
        }
    }
}

/// Every setting of a run. Each field is a key of the flat config file and
/// a same-named command-line flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub alpha: AlphaKind,
    /// `false` gives the vanilla LSTM: brackets are ordinary tokens.
    pub stack: bool,
    pub layers: usize,
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub summary_vocab_size: usize,
    pub summary_embedding_size: usize,
    pub summary_len: usize,
    pub attention_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Bracket policy while training.
    pub mode: StackMode,
    /// Bracket policy for evaluation.
    pub eval_mode: StackMode,
    /// Stop once the validation metric reaches this value.
    pub stop_at_metric: Option<f64>,
}

pub const CONFIG_KEYS: [&str; 20] = [
    "task",
    "alpha",
    "stack",
    "layers",
    "hidden_size",
    "embedding_size",
    "vocab_size",
    "max_len",
    "summary_vocab_size",
    "summary_embedding_size",
    "summary_len",
    "attention_size",
    "batch_size",
    "epochs",
    "learning_rate",
    "clip_norm",
    "seed",
    "mode",
    "eval_mode",
    "stop_at_metric",
];

impl RunConfig {
    /// Defaults for `task`.
    pub fn defaults(task: Task) -> Self {
        let base = Self {
            task,
            alpha: AlphaKind::Summarization,
            stack: true,
            layers: 1,
            hidden_size: 200,
            embedding_size: 200,
            vocab_size: 5000,
            max_len: 400,
            summary_vocab_size: 26971,
            summary_embedding_size: 128,
            summary_len: 30,
            attention_size: 128,
            batch_size: 32,
            epochs: 7,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 1,
            mode: StackMode::Lenient,
            eval_mode: StackMode::Strict,
            stop_at_metric: None,
        };
        match task {
            Task::Completion => Self { layers: 2, ..base },
            Task::Classification => Self {
                hidden_size: 600,
                embedding_size: 600,
                vocab_size: 1000,
                max_len: 600,
                epochs: 8,
                ..base
            },
            Task::Summarization => Self {
                hidden_size: 128,
                embedding_size: 128,
                vocab_size: 50000,
                max_len: 300,
                epochs: 10,
                ..base
            },
        }
    }

    /// Task defaults, then `file` pairs, then `overrides`, each later
    /// assignment winning. The task itself is taken from the last pair that
    /// sets it.
    pub fn resolve(file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let task = file
            .iter()
            .chain(overrides)
            .rfind(|(k, _)| k == "task")
            .map(|(_, v)| v.parse::<Task>().map_err(HarnessError::Config))
            .transpose()?
            .unwrap_or(Task::Completion);
        let mut cfg = Self::defaults(task);
        for (k, v) in file.iter().chain(overrides) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
            v.trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        let cfg_err = HarnessError::Config;
        match key {
            "task" => self.task = v.parse().map_err(cfg_err)?,
            "alpha" => self.alpha = v.parse().map_err(cfg_err)?,
            "stack" => self.stack = num(key, v)?,
            "layers" => self.layers = num(key, v)?,
            "hidden_size" => self.hidden_size = num(key, v)?,
            "embedding_size" => self.embedding_size = num(key, v)?,
            "vocab_size" => self.vocab_size = num(key, v)?,
            "max_len" => self.max_len = num(key, v)?,
            "summary_vocab_size" => self.summary_vocab_size = num(key, v)?,
            "summary_embedding_size" => self.summary_embedding_size = num(key, v)?,
            "summary_len" => self.summary_len = num(key, v)?,
            "attention_size" => self.attention_size = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "clip_norm" => self.clip_norm = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "mode" => self.mode = v.parse().map_err(cfg_err)?,
            "eval_mode" => self.eval_mode = v.parse().map_err(cfg_err)?,
            "stop_at_metric" => {
                self.stop_at_metric = match v {
                    "" | "none" => None,
                    _ => Some(num(key, v)?),
                }
            }
            _ => return Err(HarnessError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let sizes = [
            ("layers", self.layers),
            ("hidden_size", self.hidden_size),
            ("embedding_size", self.embedding_size),
            ("max_len", self.max_len),
            ("summary_embedding_size", self.summary_embedding_size),
            ("summary_len", self.summary_len),
            ("attention_size", self.attention_size),
            ("batch_size", self.batch_size),
        ];
        if let Some((k, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(HarnessError::Config(format!("{k} must be positive")));
        }
        if self.vocab_size < 5 || self.summary_vocab_size < 5 {
            return Err(HarnessError::Config("vocabulary sizes must be at least 5".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HarnessError::Config("learning_rate must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(HarnessError::Config("clip_norm must be positive".into()));
        }
        if self.stack && self.alpha == AlphaKind::Summarization && self.embedding_size != self.hidden_size {
            return Err(HarnessError::Config(format!(
                "summarization alpha needs embedding_size == hidden_size (got {} and {})",
                self.embedding_size, self.hidden_size
            )));
        }
        Ok(())
    }

    /// Key-value pairs in [`CONFIG_KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let stop = self.stop_at_metric.map_or("none".to_string(), |v| v.to_string());
        let values = [
            self.task.to_string(),
            self.alpha.to_string(),
            self.stack.to_string(),
            self.layers.to_string(),
            self.hidden_size.to_string(),
            self.embedding_size.to_string(),
            self.vocab_size.to_string(),
            self.max_len.to_string(),
            self.summary_vocab_size.to_string(),
            self.summary_embedding_size.to_string(),
            self.summary_len.to_string(),
            self.attention_size.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.learning_rate.to_string(),
            self.clip_norm.to_string(),
            self.seed.to_string(),
            self.mode.to_string(),
            self.eval_mode.to_string(),
            stop,
        ];
        CONFIG_KEYS.into_iter().zip(values).collect()
    }

    /// The config file form; [`parse_config_file`] reads it back.
    pub fn to_file_string(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a key may appear only once.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if !CONFIG_KEYS.contains(&k) {
            return Err(HarnessError::Config(format!(
                "line {}: unknown config key {k:?}",
                i + 1
            )));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(HarnessError::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

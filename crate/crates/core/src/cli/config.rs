//! Run configuration: one flat table of keys shared by the config file and
//! the command-line flags. Flags override file values.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generator::BagMode;
use crate::policy::RewardKind;
use crate::teacher::TeacherKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

impl Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Sample => "sample",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(DecodeMode::Greedy),
            "sample" => Ok(DecodeMode::Sample),
            _ => Err(Error::invalid(format!("unknown decode mode {s:?}"))),
        }
    }
}

/// A value that can appear on the right of `key = value`.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_from_str!(usize, u64, f64, bool, String, RewardKind, TeacherKind, DecodeMode);

impl ConfigValue for BagMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse::<BagMode>().map_err(|e| e.to_string())
    }
    fn render(&self) -> String {
        match self {
            BagMode::Sum => "sum".into(),
            BagMode::Mean => "mean".into(),
        }
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Err("empty path".into())
        } else {
            Ok(PathBuf::from(s))
        }
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn render(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

macro_rules! run_config {
    ($( $name:ident : $ty:ty = $default:expr ; $help:literal ),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( #[doc = $help] pub $name: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $( $name: $default, )* }
            }
        }

        impl RunConfig {
            /// (key, help) for every setting, in declaration order.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[ $( (stringify!($name), $help) ),* ];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($name) => {
                        self.$name = <$ty as ConfigValue>::parse_value(value.trim())
                            .map_err(|e| Error::invalid(format!("bad value {value:?} for {key}: {e}")))?;
                    } )*
                    _ => return Err(Error::invalid(format!("unknown configuration key {key:?}"))),
                }
                Ok(())
            }

            /// Every key with its rendered value, in declaration order.
            pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
                vec![ $( (stringify!($name), ConfigValue::render(&self.$name)) ),* ]
            }
        }
    };
}

run_config! {
    corpus: Option<PathBuf> = None; "Corpus JSONL; the training split, or the whole corpus when dev_corpus is unset",
    dev_corpus: Option<PathBuf> = None; "Dev corpus JSONL",
    n_dev: usize = 100; "Trailing corpus records held out as dev when dev_corpus is unset",
    lexicon: Option<PathBuf> = None; "Event lexicon TSV",
    out_dir: PathBuf = PathBuf::from("out"); "Directory for this stage's outputs",
    absolute_teacher: Option<PathBuf> = None; "Absolute-order teacher checkpoint",
    relative_teacher: Option<PathBuf> = None; "Relative-order teacher checkpoint",
    generator: Option<PathBuf> = None; "Generator checkpoint",
    generations: Option<PathBuf> = None; "Generations JSONL to evaluate",
    references: Option<PathBuf> = None; "Reference corpus JSONL overriding the gold field of generations",
    seed: u64 = 0; "Seed for initialization, shuffling, dropout and sampling",
    min_count: usize = 1; "Minimum token count for the vocabulary",
    delimiters: String = ". ! ;".into(); "Space-separated sentence delimiters",
    teacher_kind: TeacherKind = TeacherKind::Relative; "Teacher ordering scheme (absolute|relative)",
    teacher_embed: usize = 100; "Teacher embedding size",
    teacher_hidden: usize = 100; "Teacher GRU size",
    teacher_dropout: f64 = 0.3; "Teacher dropout",
    teacher_lr: f64 = 1e-3; "Teacher learning rate",
    teacher_epochs: usize = 20; "Teacher epochs",
    teacher_batch_size: usize = 32; "Teacher batch size",
    patience: usize = 5; "Early-stopping patience in epochs",
    l_min: usize = 3; "Shortest sentence window",
    l_max: usize = 6; "Longest sentence window",
    samples_per_doc: usize = 20; "Windows sampled per document per epoch",
    embed: usize = 256; "Generator embedding size",
    enc_hidden: usize = 256; "Ingredient encoder GRU size per direction",
    dec_hidden: usize = 256; "Decoder GRU size",
    dropout: f64 = 0.3; "Generator dropout",
    bag: BagMode = BagMode::Mean; "Title and ingredient bag pooling (sum|mean)",
    lr: f64 = 3e-4; "Pretraining learning rate",
    epochs: usize = 30; "Pretraining epochs",
    batch_size: usize = 32; "Generator batch size",
    scheduled_sampling: bool = true; "Feed back sampled tokens during pretraining",
    beta: f64 = 2.0; "Sampling temperature",
    reward: RewardKind = RewardKind::Ro; "Policy reward (ao|ro|ro+b4|bleu1|bleu4|rouge-l)",
    gamma: f64 = 0.97; "Weight of the policy loss against the likelihood loss",
    rl_lr: f64 = 3e-5; "Policy learning rate",
    rl_epochs: usize = 5; "Policy epochs",
    max_len: usize = 150; "Longest decoded body in tokens",
    mle_only: bool = false; "Fine-tune on the likelihood loss alone",
    decode: DecodeMode = DecodeMode::Greedy; "Decoding for generate (greedy|sample)",
    n_recipes: usize = 1000; "Recipes written by make-synthetic",
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| {
                Error::invalid(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
        }
        Ok(())
    }

    pub fn delimiter_list(&self) -> Vec<String> {
        self.delimiters.split_whitespace().map(str::to_string).collect()
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.l_min == 0 || self.l_min > self.l_max {
            return bad("window bounds must satisfy 1 <= l_min <= l_max");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        for (name, p) in [("dropout", self.dropout), ("teacher_dropout", self.teacher_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return bad("beta must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if self.delimiter_list().is_empty() {
            return bad("at least one delimiter is required");
        }
        if self.batch_size == 0 || self.teacher_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.to_pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
                .collect(),
        )
    }
}
